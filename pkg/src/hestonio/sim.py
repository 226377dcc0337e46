"""Euler simulation of joint (V, R) paths with per-path counter-based streams.

Each path draws its Gaussian increments from a Philox generator keyed by
``(seed, path_index)``.  A path's trajectory is therefore a pure function of
the parameters, the configuration and its index: results do not depend on
which paths are simulated together, in which order, or on how many threads.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .errors import ConfigError, GridMismatch
from .io import atomic_write_bytes
from .params import HestonParams

_CHUNK_STEPS = 1 << 16
_GRID_RTOL = 1e-9


def to_steps(value: float, dt: float, what: str = "value") -> int:
    """Number of dt steps in ``value``; ConfigError unless it is an integer multiple."""
    n = round(value / dt)
    if abs(n * dt - value) > _GRID_RTOL * max(abs(value), dt):
        raise ConfigError(f"{what}={value!r} is not an integer multiple of dt={dt!r}")
    return int(n)


@dataclass(frozen=True)
class SimConfig:
    """Euler grid, initial state and stream identity of a batch of paths.

    Only the part of each path on ``record_start + j * record_stride * dt`` is
    kept, which is what makes long or fine-grained runs fit in memory.
    """

    dt: float
    horizon: float
    n_paths: int
    seed: int = 0
    v0: float | None = None  # None: start at theta
    r0: float = 0.0
    store_v: bool = True
    record_start: float = 0.0
    record_stride: int = 1
    path_offset: int = 0

    def __post_init__(self) -> None:
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        to_steps(self.horizon, self.dt, "horizon")
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1, got {self.n_paths}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.path_offset < 0 or self.path_offset + self.n_paths > 2**64:
            raise ConfigError("path indices must fit in 64 bits")
        if self.v0 is not None and not self.v0 > 0:
            raise ConfigError(f"v0 must be positive, got {self.v0}")
        if self.record_stride < 1:
            raise ConfigError(f"record_stride must be >= 1, got {self.record_stride}")
        start = to_steps(self.record_start, self.dt, "record_start")
        if not 0 <= start <= self.n_steps:
            raise ConfigError(f"record_start={self.record_start} outside [0, horizon]")
        if (self.n_steps - start) % self.record_stride:
            raise ConfigError("record window length must be a multiple of record_stride")

    @property
    def n_steps(self) -> int:
        return to_steps(self.horizon, self.dt, "horizon")

    @property
    def record_start_step(self) -> int:
        return to_steps(self.record_start, self.dt, "record_start")

    @property
    def n_records(self) -> int:
        return (self.n_steps - self.record_start_step) // self.record_stride + 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PathBundle:
    """Recorded samples of a contiguous range of simulated paths.

    ``returns[i, j]`` is R at ``times[j]`` on path ``path_start + i``.
    """

    times: np.ndarray
    returns: np.ndarray
    variances: np.ndarray | None
    seed: int
    path_start: int
    dt: float
    stride: int = 1
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.returns.ndim != 2 or self.returns.shape[1] != self.times.size:
            raise ValueError("returns must have shape (n_paths, len(times))")
        if self.variances is not None and self.variances.shape != self.returns.shape:
            raise ValueError("variances must match returns in shape")
        for arr in (self.times, self.returns, self.variances):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def n_paths(self) -> int:
        return self.returns.shape[0]

    @property
    def spacing(self) -> float:
        return self.dt * self.stride

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def path_range(self) -> range:
        return range(self.path_start, self.path_start + self.n_paths)

    def index(self, t: float) -> int:
        """Position of time t on the recorded grid; GridMismatch when off-grid."""
        pos = (t - self.start) / self.spacing
        j = round(pos)
        if abs(j - pos) > 1e-7 or not 0 <= j < self.times.size:
            raise GridMismatch(f"t={t!r} is not on the recorded grid [{self.start}, {self.end}] step {self.spacing}")
        return int(j)

    @property
    def provenance(self) -> dict:
        return {
            "seed": self.seed,
            "paths": [self.path_start, self.path_start + self.n_paths],
            "dt": self.dt,
            "stride": self.stride,
        }


@numba.njit(nogil=True, cache=True)
def _euler_chunk(v, r, noise, step0, kappa, theta, gamma, mu, beta, dt, rec_first, stride, rec_r, rec_v, store_v):
    sdt = math.sqrt(dt)
    ortho = math.sqrt(1.0 - beta * beta)
    for i in range(noise.shape[0]):
        vp = v if v > 0.0 else 0.0
        vol = math.sqrt(vp)
        dz = noise[i, 0]
        db = beta * dz + ortho * noise[i, 1]
        r = r + mu * dt + vol * sdt * dz
        v = v + kappa * (theta - vp) * dt + gamma * vol * sdt * db
        if v < 0.0:
            v = 0.0
        step = step0 + i + 1
        if step >= rec_first and (step - rec_first) % stride == 0:
            j = (step - rec_first) // stride
            rec_r[j] = r
            if store_v:
                rec_v[j] = v
    return v, r


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Independent Philox stream for one path."""
    # an explicit uint64 key: seeds >= 2**63 would otherwise round through float64
    return np.random.Generator(np.random.Philox(key=np.array([seed, path_index], dtype=np.uint64)))


def _simulate_one(params: HestonParams, cfg: SimConfig, path_index: int, rec_r: np.ndarray, rec_v: np.ndarray) -> None:
    gen = path_generator(cfg.seed, path_index)
    v = params.theta if cfg.v0 is None else cfg.v0
    r = cfg.r0
    first, stride = cfg.record_start_step, cfg.record_stride
    if first == 0:
        rec_r[0] = r
        rec_v[0] = v
    done = 0
    total = cfg.n_steps
    while done < total:
        m = min(_CHUNK_STEPS, total - done)
        noise = gen.standard_normal((m, 2))
        v, r = _euler_chunk(
            v, r, noise, done,
            params.kappa, params.theta, params.gamma, params.mu, params.beta,
            cfg.dt, first, stride, rec_r, rec_v, cfg.store_v,
        )
        done += m


def simulate(params: HestonParams, cfg: SimConfig, jobs: int = 1) -> PathBundle:
    """Full-truncation Euler paths of the Heston system.

    V <- max(V + kappa (theta - V+) dt + gamma sqrt(V+ dt) dB, 0) and
    R <- R + mu dt + sqrt(V+ dt) dZ, with dB = beta dZ + sqrt(1 - beta^2) dW.
    """
    n_rec = cfg.n_records
    returns = np.empty((cfg.n_paths, n_rec))
    variances = np.empty((cfg.n_paths, n_rec)) if cfg.store_v else None

    def work(i: int) -> None:
        rec_v = variances[i] if variances is not None else np.empty(1)
        _simulate_one(params, cfg, cfg.path_offset + i, returns[i], rec_v)

    if jobs > 1 and cfg.n_paths > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, range(cfg.n_paths)))
    else:
        for i in range(cfg.n_paths):
            work(i)
    times = cfg.record_start + cfg.dt * cfg.record_stride * np.arange(n_rec)
    return PathBundle(
        times=times,
        returns=returns,
        variances=variances,
        seed=cfg.seed,
        path_start=cfg.path_offset,
        dt=cfg.dt,
        stride=cfg.record_stride,
    )


def holder_scaling_check(
    params: HestonParams,
    cfg: SimConfig,
    h_grid: Sequence[float],
    q: int = 2,
    t: float | None = None,
    jobs: int = 1,
) -> list[tuple[float, float]]:
    """Monte Carlo estimate of ||V_{t+h} - V_t||_q for each lag h.

    ``t`` defaults to ``horizon - max(h_grid)`` so that everything before it
    serves as burn-in.
    """
    if not h_grid:
        raise ConfigError("h_grid is empty")
    steps = [to_steps(h, cfg.dt, "h") for h in h_grid]
    if min(steps) < 0:
        raise ConfigError("lags must be non-negative")
    span = max(steps)
    t_step = cfg.n_steps - span if t is None else to_steps(t, cfg.dt, "t")
    if t_step < 0 or t_step + span > cfg.n_steps:
        raise ConfigError("t + max(h) exceeds the horizon")
    stride = math.gcd(*[s for s in steps if s > 0]) if span > 0 else 1
    run = replace(cfg, store_v=True, record_start=t_step * cfg.dt, record_stride=stride,
                  horizon=(t_step + span) * cfg.dt)
    bundle = simulate(params, run, jobs=jobs)
    v = bundle.variances
    out = []
    for h, s in zip(h_grid, steps):
        diff = v[:, s // stride] - v[:, 0]
        out.append((float(h), float(np.mean(np.abs(diff) ** q) ** (1.0 / q))))
    return out


# --- binary dump ----------------------------------------------------------------------

MAGIC = b"HSTP"
VERSION = 1
_HEADER = struct.Struct("<4sIQQdQ")
_EXTENSION = struct.Struct("<dQQI")


def bundle_to_bytes(bundle: PathBundle) -> bytes:
    """Little-endian dump: header, extension, returns rows, then variance rows."""
    n_steps = bundle.times.size - 1
    flags = 1 if bundle.variances is not None else 0
    parts = [
        _HEADER.pack(MAGIC, VERSION, bundle.n_paths, n_steps, bundle.dt, bundle.seed),
        _EXTENSION.pack(bundle.start, bundle.path_start, bundle.stride, flags),
        np.ascontiguousarray(bundle.returns, dtype="<f8").tobytes(),
    ]
    if bundle.variances is not None:
        parts.append(np.ascontiguousarray(bundle.variances, dtype="<f8").tobytes())
    return b"".join(parts)


def bundle_from_bytes(data: bytes) -> PathBundle:
    if len(data) < _HEADER.size + _EXTENSION.size:
        raise ValueError("truncated path dump")
    magic, version, n_paths, n_steps, dt, seed = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported dump version {version}")
    start, path_start, stride, flags = _EXTENSION.unpack_from(data, _HEADER.size)
    n_rec = n_steps + 1
    offset = _HEADER.size + _EXTENSION.size
    count = n_paths * n_rec
    expected = offset + 8 * count * (2 if flags & 1 else 1)
    if len(data) != expected:
        raise ValueError(f"path dump has {len(data)} bytes, expected {expected}")
    returns = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(n_paths, n_rec).copy()
    variances = None
    if flags & 1:
        variances = np.frombuffer(data, dtype="<f8", count=count, offset=offset + 8 * count)
        variances = variances.reshape(n_paths, n_rec).copy()
    times = start + dt * stride * np.arange(n_rec)
    return PathBundle(times, returns, variances, seed=seed, path_start=path_start, dt=dt, stride=stride)


def write_bundle(path: str | Path, bundle: PathBundle) -> Path:
    return atomic_write_bytes(path, bundle_to_bytes(bundle))


def read_bundle(path: str | Path) -> PathBundle:
    return bundle_from_bytes(Path(path).read_bytes())


class BundleCache:
    """Directory of path dumps keyed by a content hash of (params, config)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @staticmethod
    def key(params: HestonParams, cfg: SimConfig) -> str:
        blob = json.dumps({"params": params.to_dict(), "sim": cfg.to_dict(), "v": VERSION}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:32]

    def path_for(self, params: HestonParams, cfg: SimConfig) -> Path:
        return self.root / f"{self.key(params, cfg)}.hstp"

    def get(self, params: HestonParams, cfg: SimConfig, jobs: int = 1) -> PathBundle:
        path = self.path_for(params, cfg)
        if path.exists():
            return read_bundle(path)
        bundle = simulate(params, cfg, jobs=jobs)
        write_bundle(path, bundle)
        return bundle


def simulate_cached(params: HestonParams, cfg: SimConfig, jobs: int = 1, cache: BundleCache | None = None) -> PathBundle:
    if cache is None:
        return simulate(params, cfg, jobs=jobs)
    return cache.get(params, cfg, jobs=jobs)
