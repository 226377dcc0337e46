"""Realized volatility on sliding windows and the window / sub-sampling rules."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, GridMismatch, HorizonTooShort
from .io import csv_text
from .sim import PathBundle

_FUZZ = 1e-9
_GATHER_LIMIT = 1 << 22


def _ceil(x: float) -> int:
    # guard against 1/0.05**2 = 399.99999999999994 style representation error
    return math.ceil(x - _FUZZ * max(1.0, abs(x)))


@dataclass(frozen=True)
class JRule:
    """Partition size J(eps): a constant, ceil(1/eps) or ceil(1/eps^2)."""

    kind: str
    value: int | None = None

    _ALIASES = {
        "inverse": "inverse",
        "1/eps": "inverse",
        "eps^-1": "inverse",
        "inverse-square": "inverse-square",
        "1/eps^2": "inverse-square",
        "eps^-2": "inverse-square",
    }

    def __post_init__(self) -> None:
        if self.kind == "constant":
            if self.value is None or int(self.value) != self.value or self.value < 2:
                raise ConfigError(f"constant J must be an integer >= 2, got {self.value}")
            object.__setattr__(self, "value", int(self.value))
        elif self.kind not in ("inverse", "inverse-square"):
            raise ConfigError(f"unknown J rule {self.kind!r}")

    @classmethod
    def parse(cls, spec: "JRule | int | str") -> "JRule":
        if isinstance(spec, JRule):
            return spec
        if isinstance(spec, (int, np.integer)) and not isinstance(spec, bool):
            return cls("constant", int(spec))
        text = str(spec).strip().lower().replace(" ", "")
        if text in cls._ALIASES:
            return cls(cls._ALIASES[text])
        if text.isdigit():
            return cls("constant", int(text))
        raise ConfigError(f"cannot parse J rule {spec!r}")

    def resolve(self, epsilon: float) -> int:
        if self.kind == "constant":
            return self.value
        j = _ceil(1.0 / epsilon) if self.kind == "inverse" else _ceil(1.0 / epsilon**2)
        if j < 2:
            raise ConfigError(f"J({epsilon}) = {j} < 2 for rule {self.label}")
        return j

    @property
    def label(self) -> str:
        return {"inverse": "1/eps", "inverse-square": "1/eps^2"}.get(self.kind, str(self.value))


@dataclass(frozen=True)
class ResolvedScheme:
    epsilon: float
    j: int
    n: int
    delta: float

    @property
    def sub_step(self) -> float:
        return self.epsilon / self.j

    def bind(self, spacing: float) -> "ResolvedScheme":
        """Snap delta to the sampling grid and check that eps/J lies on it."""
        m = self.sub_step / spacing
        if abs(m - round(m)) > 1e-7 * max(1.0, m) or round(m) < 1:
            raise GridMismatch(f"eps/J = {self.sub_step!r} is not a multiple of the grid spacing {spacing!r}")
        delta = max(1, round(self.delta / spacing)) * spacing
        return ResolvedScheme(self.epsilon, self.j, self.n, delta)


@dataclass(frozen=True)
class WindowScheme:
    """Partition, sample-count and spacing rules for realized volatilities.

    J from ``j_rule``; N(eps) = ceil(c_n / eps); Delta(eps) = sqrt(eps) unless
    ``delta`` fixes a constant spacing.
    """

    j_rule: JRule = field(default_factory=lambda: JRule("inverse"))
    c_n: float = 100.0
    delta: float | None = None
    epsilon: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "j_rule", JRule.parse(self.j_rule))
        if not self.c_n > 0:
            raise ConfigError(f"c_n must be positive, got {self.c_n}")
        if self.delta is not None and not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


def resolve_scheme(scheme: WindowScheme, epsilon: float | None = None) -> ResolvedScheme:
    """(J, N, Delta) for window width epsilon (defaults to ``scheme.epsilon``)."""
    eps = scheme.epsilon if epsilon is None else epsilon
    if eps is None or not eps > 0:
        raise DomainError(f"epsilon must be positive, got {eps}")
    j = scheme.j_rule.resolve(eps)
    n = max(1, _ceil(scheme.c_n / eps))
    delta = scheme.delta if scheme.delta is not None else math.sqrt(eps)
    return ResolvedScheme(epsilon=eps, j=j, n=n, delta=delta)


def _grid_index(t: float, start: float, spacing: float) -> int:
    pos = (t - start) / spacing
    j = round(pos)
    if abs(j - pos) > 1e-7 * max(1.0, abs(pos)):
        raise GridMismatch(f"t={t!r} is not on the sampling grid (start {start}, step {spacing})")
    return int(j)


def _window_sums(returns: np.ndarray, ends: np.ndarray, J: int, m: int, epsilon: float) -> np.ndarray:
    """(1/eps) sum of squared increments over windows ending at each index in ``ends``."""
    offsets = m * np.arange(-J, 1)
    out = np.empty(returns.shape[:-1] + (ends.size,))
    chunk = max(1, _GATHER_LIMIT // ((J + 1) * max(1, returns[..., 0].size)))
    for lo in range(0, ends.size, chunk):
        idx = ends[lo : lo + chunk, None] + offsets[None, :]
        pts = returns[..., idx]
        out[..., lo : lo + chunk] = np.sum(np.diff(pts, axis=-1) ** 2, axis=-1) / epsilon
    return out


def realized_volatility(
    returns: np.ndarray, t: float, epsilon: float, J: int, spacing: float, start: float = 0.0
) -> float | np.ndarray:
    """Y_t = (1/eps) sum_{k=1..J} (R_{t_k} - R_{t_{k-1}})^2 with t_k = t - eps + k eps/J.

    ``returns`` holds R on the grid start + i * spacing, either one path
    (1-D) or one path per row (2-D).  No interpolation is performed: every t_k
    must be a grid point.
    """
    returns = np.asarray(returns, dtype=float)
    if not epsilon > 0 or J < 1:
        raise DomainError(f"need epsilon > 0 and J >= 1, got epsilon={epsilon}, J={J}")
    if t - epsilon < start - _FUZZ * epsilon:
        raise DomainError(f"window ({t - epsilon}, {t}) starts before the first sample at {start}")
    end = _grid_index(t, start, spacing)
    m_pos = epsilon / J / spacing
    m = round(m_pos)
    if m < 1 or abs(m - m_pos) > 1e-7 * max(1.0, m_pos):
        raise GridMismatch(f"eps/J = {epsilon / J!r} is not a multiple of the grid spacing {spacing!r}")
    if end >= returns.shape[-1]:
        raise GridMismatch(f"t={t!r} lies beyond the last sample")
    out = _window_sums(returns, np.array([end]), J, m, epsilon)[..., 0]
    return float(out) if out.ndim == 0 else out


def realized_at(bundle: PathBundle, times: Sequence[float], epsilon: float, J: int) -> np.ndarray:
    """Realized volatilities of every path in ``bundle`` at each of ``times``."""
    m_pos = epsilon / J / bundle.spacing
    m = round(m_pos)
    if m < 1 or abs(m - m_pos) > 1e-7 * max(1.0, m_pos):
        raise GridMismatch(f"eps/J = {epsilon / J!r} is not a multiple of the grid spacing {bundle.spacing!r}")
    ends = np.array([bundle.index(t) for t in times], dtype=np.int64)
    if ends.size and ends.min() - J * m < 0:
        raise DomainError(f"a window of width {epsilon} starts before the first recorded sample")
    return _window_sums(bundle.returns, ends, J, m, epsilon)


@dataclass(frozen=True)
class RealizedSeries:
    """Sub-sampled realized volatilities W_k = Y_{k Delta}, k = k0..N."""

    observations: np.ndarray
    ks: np.ndarray
    epsilon: float
    delta: float
    j: int
    n: int
    path_id: int
    seed: int | None = None

    @property
    def times(self) -> np.ndarray:
        return self.ks * self.delta

    def __len__(self) -> int:
        return self.observations.size

    def to_csv(self) -> str:
        comments = [
            f"epsilon={self.epsilon!r}",
            f"J={self.j}",
            f"delta={self.delta!r}",
            f"seed={self.seed}",
            f"path_id={self.path_id}",
        ]
        rows = zip(self.ks.tolist(), self.times.tolist(), self.observations.tolist())
        return csv_text(["k", "t", "W"], rows, comments)


def realized_series(bundle: PathBundle, path_id: int, scheme: WindowScheme, epsilon: float | None = None) -> RealizedSeries:
    """Observations W_k for k0 <= k <= N, k0 the smallest k with k Delta >= eps.

    ``path_id`` is the absolute path index (as in ``bundle.path_range``).
    """
    if path_id not in bundle.path_range:
        raise ValueError(f"path {path_id} not in bundle paths {bundle.path_range}")
    res = resolve_scheme(scheme, epsilon).bind(bundle.spacing)
    if res.delta < res.epsilon:
        warnings.warn(f"Delta={res.delta} < eps={res.epsilon}: consecutive windows overlap", stacklevel=2)
    k0 = max(1, _ceil(res.epsilon / res.delta))
    needed = res.n * res.delta
    if needed > bundle.end + 1e-9 * needed:
        raise HorizonTooShort(
            f"series needs samples up to N*Delta = {needed:.6g} but the horizon ends at {bundle.end:.6g}"
        )
    if res.n < k0:
        raise HorizonTooShort(f"N={res.n} leaves no window with k*Delta >= eps={res.epsilon}")
    ks = np.arange(k0, res.n + 1)
    step = round(res.delta / bundle.spacing)
    first = bundle.index(k0 * res.delta)
    ends = first + step * (ks - k0)
    m = round(res.sub_step / bundle.spacing)
    if first - res.j * m < 0:
        raise DomainError("first window starts before the first recorded sample")
    row = bundle.returns[path_id - bundle.path_start]
    w = _window_sums(row, ends.astype(np.int64), res.j, m, res.epsilon)
    return RealizedSeries(
        observations=w,
        ks=ks,
        epsilon=res.epsilon,
        delta=res.delta,
        j=res.j,
        n=res.n,
        path_id=path_id,
        seed=bundle.seed,
    )
