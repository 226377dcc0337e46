"""Empirical moments of realized-volatility series and the resulting parameter estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .analytic import params_from_moments
from .errors import DomainError, EstimationDegenerate, InsufficientData
from .realized import RealizedSeries, WindowScheme

QUALITY_BAND = (0.3, 0.7)


def lag_index(u: float, delta: float) -> int:
    """Nearest integer to u / delta, ties rounded up."""
    if u < 0 or not delta > 0:
        raise DomainError(f"need u >= 0 and delta > 0, got u={u}, delta={delta}")
    return int(math.floor(u / delta + 0.5))


@dataclass(frozen=True)
class MomentEstimates:
    """Empirical mean and lagged covariances of one observation series.

    ``k_hat`` maps each requested lag u to ``(U, value)`` where ``U`` is the
    lag in units of ``delta``.
    """

    m_hat: float
    k_hat: dict[float, tuple[int, float]]
    n_used: int
    delta: float
    scheme: WindowScheme | None = None

    def lag(self, u: float) -> tuple[int, float]:
        try:
            return self.k_hat[u]
        except KeyError:
            raise KeyError(f"lag {u} was not estimated; available: {sorted(self.k_hat)}") from None

    def realized_lag(self, u: float) -> float:
        return self.lag(u)[0] * self.delta


def empirical_moments(series: RealizedSeries | np.ndarray, lags: Iterable[float], delta: float | None = None) -> MomentEstimates:
    """m = mean(W);  K(u) = -m^2 + (1/(N-U)) sum_{k<=N-U} W_k W_{k+U}.

    Accepts a :class:`RealizedSeries` or a bare array together with ``delta``.
    """
    if isinstance(series, RealizedSeries):
        w, delta = series.observations, series.delta
    else:
        w = np.asarray(series, dtype=float)
        if delta is None:
            raise DomainError("delta is required for a bare observation array")
    n = w.size
    if n == 0:
        raise InsufficientData("empty series")
    m_hat = float(np.mean(w))
    k_hat: dict[float, tuple[int, float]] = {}
    for u in lags:
        U = lag_index(u, delta)
        if n <= U:
            raise InsufficientData(f"lag u={u} needs U={U} < N={n} observations")
        prod = float(np.dot(w[: n - U], w[U:])) / (n - U)
        k_hat[u] = (U, prod - m_hat * m_hat)
    return MomentEstimates(m_hat=m_hat, k_hat=k_hat, n_used=n, delta=float(delta))


@dataclass(frozen=True)
class ParamEstimate:
    theta_hat: float
    kappa_hat: float
    gamma_hat: float
    lag_u: float
    k0: float
    ku: float
    m_hat: float = field(default=math.nan)

    @property
    def ratio(self) -> float:
        return self.ku / self.k0

    @property
    def diagnostics(self) -> dict[str, float]:
        return {"K0": self.k0, "Ku": self.ku, "ratio": self.ratio}


def estimate_params(moments: MomentEstimates, u: float) -> ParamEstimate:
    """Plug empirical moments into the moment-to-parameter map.

    The lag entering kappa is the realized lag U*delta, not the requested u.
    Degenerate covariances raise EstimationDegenerate rather than being clamped.
    """
    if 0 not in moments.k_hat and 0.0 not in moments.k_hat:
        raise DomainError("moments must include lag 0")
    _, k0 = moments.lag(0)
    U, ku = moments.lag(u)
    lag = U * moments.delta
    if lag <= 0:
        raise EstimationDegenerate(f"realized lag {lag} must be positive")
    try:
        kappa, theta, gamma = params_from_moments(moments.m_hat, k0, ku, lag)
    except DomainError as exc:
        raise EstimationDegenerate(str(exc)) from exc
    return ParamEstimate(theta, kappa, gamma, lag, k0, ku, moments.m_hat)


@dataclass(frozen=True)
class LagQuality:
    passed: bool
    correlation: float
    band: tuple[float, float] = QUALITY_BAND


def lag_quality_check(estimate: ParamEstimate, band: tuple[float, float] = QUALITY_BAND) -> LagQuality:
    """Is exp(-kappa_hat u) inside ``band``?  A posteriori check on the chosen lag."""
    rho = math.exp(-estimate.kappa_hat * estimate.lag_u)
    return LagQuality(band[0] <= rho <= band[1], rho, band)
