"""Monte Carlo studies: L^q errors of realized volatility and estimator errors.

All studies reduce over paths and replicates in index order, so results are
bit-identical for any degree of parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import reduce
from typing import Callable, Iterable, Sequence

import numpy as np

from .analytic import stationary_moments
from .errors import ConfigError, DomainError, EstimationDegenerate
from .estimators import empirical_moments, estimate_params
from .params import HestonParams
from .realized import JRule, WindowScheme, realized_at, realized_series, resolve_scheme
from .sim import BundleCache, SimConfig, simulate_cached, to_steps

Z95 = 1.96


# --- slope regression -------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    max_residual: float
    eps_used: tuple[float, ...] = ()

    def __iter__(self):
        return iter((self.slope, self.intercept, self.max_residual))


def slope_fit(points: Iterable[tuple[float, float]]) -> SlopeFit:
    """Ordinary least squares of log(value) on log(epsilon)."""
    pts = sorted((float(e), float(v)) for e, v in points)
    if len(pts) < 2:
        raise DomainError("slope fit needs at least two points")
    if any(e <= 0 or v <= 0 for e, v in pts):
        raise DomainError("slope fit needs positive epsilons and values")
    x = np.log([e for e, _ in pts])
    y = np.log([v for _, v in pts])
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    if sxx == 0.0:
        raise DomainError("slope fit needs at least two distinct epsilons")
    slope = float(np.dot(xc, y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    return SlopeFit(slope, intercept, float(np.max(np.abs(resid))), tuple(e for e, _ in pts))


def fit_with_cut(points: Sequence[tuple[float, float]], cut: float | None) -> SlopeFit:
    """Use only eps <= cut once the grid has at least four points."""
    if cut is not None and len(points) >= 4:
        kept = [p for p in points if p[0] <= cut * (1 + 1e-12)]
        if len(kept) >= 2:
            points = kept
    return slope_fit(points)


# --- L^q errors of realized volatility ----------------------------------------------------


@dataclass(frozen=True)
class LqStudyConfig:
    params: HestonParams
    eps_grid: tuple[float, ...]
    j_rules: tuple[JRule, ...] = (JRule("inverse"),)
    q_list: tuple[int, ...] = (2, 4)
    t_eval: float = 1.0
    n_blocks: int = 20
    block_size: int = 500
    dt: float = 1e-5
    seed: int = 0
    v0: float | None = None
    r0: float = 0.0
    slope_cut: float | None = 0.05

    def __post_init__(self) -> None:
        object.__setattr__(self, "eps_grid", tuple(float(e) for e in self.eps_grid))
        object.__setattr__(self, "j_rules", tuple(JRule.parse(r) for r in self.j_rules))
        object.__setattr__(self, "q_list", tuple(int(q) for q in self.q_list))
        if not self.eps_grid:
            raise ConfigError("epsilon grid is empty")
        if not self.j_rules:
            raise ConfigError("no J rules given")
        if any(e <= 0 for e in self.eps_grid):
            raise ConfigError("epsilons must be positive")
        if any(q < 1 for q in self.q_list) or not self.q_list:
            raise ConfigError("q_list must hold integers >= 1")
        if self.n_blocks < 2 or self.block_size < 2:
            raise ConfigError("need n_blocks >= 2 and block_size >= 2")
        if max(self.eps_grid) > self.t_eval:
            raise ConfigError(f"t_eval={self.t_eval} must be >= max epsilon={max(self.eps_grid)}")
        to_steps(self.t_eval, self.dt, "t_eval")
        self.record_stride  # alignment check

    def cells(self) -> list[tuple[float, JRule, int]]:
        return [(e, rule, rule.resolve(e)) for rule in self.j_rules for e in self.eps_grid]

    @property
    def record_stride(self) -> int:
        subs = [to_steps(e / j, self.dt, f"eps/J for eps={e}, J={j}") for e, _, j in self.cells()]
        return reduce(math.gcd, subs)

    def sim_config(self, block: int) -> SimConfig:
        eps_max = max(self.eps_grid)
        start = to_steps(self.t_eval, self.dt) - to_steps(eps_max, self.dt)
        return SimConfig(
            dt=self.dt,
            horizon=self.t_eval,
            n_paths=self.block_size,
            seed=self.seed,
            v0=self.v0,
            r0=self.r0,
            store_v=True,
            record_start=start * self.dt,
            record_stride=self.record_stride,
            path_offset=block * self.block_size,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.to_dict()
        d["j_rules"] = [r.label for r in self.j_rules]
        return d


@dataclass(frozen=True)
class LqCell:
    epsilon: float
    rule: str
    j: int
    q: int
    estimate: float
    sigma: float
    block_values: tuple[float, ...] = field(repr=False, default=())

    @property
    def stderr(self) -> float:
        """Standard error of the block mean (sigma / sqrt(n_blocks))."""
        return self.sigma / math.sqrt(len(self.block_values)) if self.block_values else math.nan

    @property
    def ci95(self) -> tuple[float, float]:
        return self.estimate - Z95 * self.sigma, self.estimate + Z95 * self.sigma


def block_lq(errors: np.ndarray, q: int) -> float:
    """(mean |e|^q)^(1/q) over one block of paths."""
    return float(np.mean(np.abs(errors) ** q) ** (1.0 / q))


def aggregate_blocks(block_values: Sequence[float]) -> tuple[float, float]:
    """Mean over blocks and the population standard deviation across blocks."""
    vals = np.asarray(block_values, dtype=float)
    mean = float(np.mean(vals))
    return mean, float(np.sqrt(np.mean((vals - mean) ** 2)))


@dataclass
class ErrorReport:
    study: str
    cells: list[LqCell]
    slopes: dict[tuple[str, int], SlopeFit]
    config: dict

    def cell(self, epsilon: float, rule: str | JRule, q: int) -> LqCell:
        label = JRule.parse(rule).label
        for c in self.cells:
            if c.rule == label and c.q == q and math.isclose(c.epsilon, epsilon, rel_tol=1e-12):
                return c
        raise KeyError((epsilon, label, q))

    def series(self, rule: str | JRule, q: int) -> list[tuple[float, float]]:
        label = JRule.parse(rule).label
        return sorted((c.epsilon, c.estimate) for c in self.cells if c.rule == label and c.q == q)

    HEADER = ("study", "epsilon", "j_rule", "J", "q", "estimate", "sigma", "stderr", "ci_low", "ci_high", "slope")

    def rows(self) -> list[tuple]:
        out = []
        for c in self.cells:
            lo, hi = c.ci95
            fit = self.slopes.get((c.rule, c.q))
            out.append(
                (self.study, c.epsilon, c.rule, c.j, c.q, c.estimate, c.sigma, c.stderr, lo, hi,
                 fit.slope if fit else math.nan)
            )
        return out

    def to_dict(self) -> dict:
        return {
            "study": self.study,
            "config": self.config,
            "cells": [
                {
                    "epsilon": c.epsilon, "j_rule": c.rule, "J": c.j, "q": c.q, "estimate": c.estimate,
                    "sigma": c.sigma, "stderr": c.stderr, "ci95": list(c.ci95),
                    "block_values": list(c.block_values),
                }
                for c in self.cells
            ],
            "slopes": [
                {"j_rule": rule, "q": q, "slope": f.slope, "intercept": f.intercept,
                 "max_residual": f.max_residual, "eps_used": list(f.eps_used)}
                for (rule, q), f in self.slopes.items()
            ],
        }


def block_errors(cfg: LqStudyConfig, block: int, jobs: int = 1, cache: BundleCache | None = None) -> dict:
    """|Y_T - V_T| for every path of one block, keyed by (epsilon, rule label)."""
    bundle = simulate_cached(cfg.params, cfg.sim_config(block), jobs=jobs, cache=cache)
    v_end = bundle.variances[:, -1]
    out = {}
    for eps, rule, j in cfg.cells():
        y = realized_at(bundle, [cfg.t_eval], eps, j)[:, 0]
        out[(eps, rule.label)] = np.abs(y - v_end)
    return out


def lq_error_study(
    cfg: LqStudyConfig,
    jobs: int = 1,
    cache: BundleCache | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> ErrorReport:
    """Block estimates (mean |Y_T - V_T|^q)^(1/q), averaged over disjoint blocks."""
    per_block: dict[tuple[float, str, int], list[float]] = {}
    for b in range(cfg.n_blocks):
        errs = block_errors(cfg, b, jobs=jobs, cache=cache)
        for (eps, label), e in errs.items():
            for q in cfg.q_list:
                per_block.setdefault((eps, label, q), []).append(block_lq(e, q))
        if progress:
            progress(b + 1, cfg.n_blocks)
    cells = []
    for eps, rule, j in cfg.cells():
        for q in cfg.q_list:
            vals = per_block[(eps, rule.label, q)]
            est, sigma = aggregate_blocks(vals)
            cells.append(LqCell(eps, rule.label, j, q, est, sigma, tuple(vals)))
    report = ErrorReport("lq-convergence", cells, {}, cfg.to_dict())
    if len(cfg.eps_grid) >= 2:
        for rule in cfg.j_rules:
            for q in cfg.q_list:
                pts = report.series(rule, q)
                if all(v > 0 for _, v in pts):
                    report.slopes[(rule.label, q)] = fit_with_cut(pts, cfg.slope_cut)
    return report


# --- estimator errors ----------------------------------------------------------------------


QUANTITIES = ("theta", "kappa", "gamma", "m", "K0", "Ku")


@dataclass(frozen=True)
class ReplicateRow:
    replicate: int
    epsilon: float
    theta_hat: float
    kappa_hat: float
    gamma_hat: float
    m_hat: float
    k0_hat: float
    ku_hat: float
    realized_u: float
    degenerate: bool

    HEADER = ("replicate", "epsilon", "theta_hat", "kappa_hat", "gamma_hat", "m_hat", "K0_hat", "Ku_hat",
              "realized_u", "degenerate")

    def as_tuple(self) -> tuple:
        return (self.replicate, self.epsilon, self.theta_hat, self.kappa_hat, self.gamma_hat, self.m_hat,
                self.k0_hat, self.ku_hat, self.realized_u, int(self.degenerate))


@dataclass(frozen=True)
class EstimatorCell:
    epsilon: float
    quantity: str
    error: float
    stderr: float
    n_used: int


@dataclass
class EstimatorReport:
    cells: list[EstimatorCell]
    slopes: dict[str, SlopeFit]
    degenerate: dict[float, int]
    replicates: list[ReplicateRow]
    config: dict
    study: str = "estimator-convergence"

    def error(self, epsilon: float, quantity: str) -> float:
        return self.cell(epsilon, quantity).error

    def cell(self, epsilon: float, quantity: str) -> EstimatorCell:
        for c in self.cells:
            if c.quantity == quantity and math.isclose(c.epsilon, epsilon, rel_tol=1e-12):
                return c
        raise KeyError((epsilon, quantity))

    def series(self, quantity: str) -> list[tuple[float, float]]:
        return sorted((c.epsilon, c.error) for c in self.cells if c.quantity == quantity)

    HEADER = ("study", "epsilon", "parameter", "estimate", "sigma", "ci_low", "ci_high", "n_used", "n_degenerate", "slope")

    def rows(self) -> list[tuple]:
        out = []
        for c in self.cells:
            fit = self.slopes.get(c.quantity)
            out.append((self.study, c.epsilon, c.quantity, c.error, c.stderr, c.error - Z95 * c.stderr,
                        c.error + Z95 * c.stderr, c.n_used, self.degenerate.get(c.epsilon, 0),
                        fit.slope if fit else math.nan))
        return out

    def to_dict(self) -> dict:
        return {
            "study": self.study,
            "config": self.config,
            "cells": [asdict(c) for c in self.cells],
            "degenerate": {repr(k): v for k, v in self.degenerate.items()},
            "slopes": {q: {"slope": f.slope, "intercept": f.intercept, "max_residual": f.max_residual,
                           "eps_used": list(f.eps_used)} for q, f in self.slopes.items()},
        }


def l2_error(values: Sequence[float], truth: float | Sequence[float]) -> tuple[float, float]:
    """sqrt(mean (x - truth)^2) and its delta-method standard error."""
    d2 = (np.asarray(values, dtype=float) - np.asarray(truth, dtype=float)) ** 2
    if d2.size == 0:
        return math.nan, math.nan
    err = float(np.sqrt(np.mean(d2)))
    if d2.size < 2 or err == 0.0:
        return err, 0.0
    return err, float(np.std(d2, ddof=1) / math.sqrt(d2.size) / (2.0 * err))


def summarize_replicates(
    rows: Sequence[ReplicateRow], params: HestonParams, slope_cut: float | None = 0.05
) -> tuple[list[EstimatorCell], dict[str, SlopeFit], dict[float, int]]:
    """L2 errors per epsilon; degenerate replicates are excluded from theta/kappa/gamma."""
    st = stationary_moments(params)
    truth = {"theta": params.theta, "kappa": params.kappa, "gamma": params.gamma}
    eps_values = sorted({r.epsilon for r in rows}, reverse=True)
    cells: list[EstimatorCell] = []
    degenerate: dict[float, int] = {}
    for eps in eps_values:
        group = [r for r in rows if r.epsilon == eps]
        good = [r for r in group if not r.degenerate]
        degenerate[eps] = len(group) - len(good)
        for name, attr in (("theta", "theta_hat"), ("kappa", "kappa_hat"), ("gamma", "gamma_hat")):
            err, se = l2_error([getattr(r, attr) for r in good], truth[name])
            cells.append(EstimatorCell(eps, name, err, se, len(good)))
        err, se = l2_error([r.m_hat for r in group], st.m1)
        cells.append(EstimatorCell(eps, "m", err, se, len(group)))
        err, se = l2_error([r.k0_hat for r in group], st.k0)
        cells.append(EstimatorCell(eps, "K0", err, se, len(group)))
        err, se = l2_error([r.ku_hat for r in group], [st.covariance(r.realized_u) for r in group])
        cells.append(EstimatorCell(eps, "Ku", err, se, len(group)))
    slopes: dict[str, SlopeFit] = {}
    if len(eps_values) >= 2:
        for q in QUANTITIES:
            pts = [(c.epsilon, c.error) for c in cells if c.quantity == q]
            if all(v > 0 and math.isfinite(v) for _, v in pts):
                slopes[q] = fit_with_cut(pts, slope_cut)
    return cells, slopes, degenerate


def estimate_replicate(
    params: HestonParams,
    sim: SimConfig,
    regime: WindowScheme,
    eps_grid: Sequence[float],
    lag: float,
    cache: BundleCache | None = None,
) -> list[ReplicateRow]:
    """One long trajectory, estimated at every epsilon of the grid."""
    bundle = simulate_cached(params, sim, cache=cache)
    rows = []
    for eps in eps_grid:
        series = realized_series(bundle, sim.path_offset, regime, eps)
        mom = empirical_moments(series, [0.0, lag])
        U, ku = mom.lag(lag)
        k0 = mom.lag(0.0)[1]
        try:
            est = estimate_params(mom, lag)
            th, ka, ga, bad = est.theta_hat, est.kappa_hat, est.gamma_hat, False
        except EstimationDegenerate:
            th = ka = ga = math.nan
            bad = True
        rows.append(ReplicateRow(sim.path_offset, eps, th, ka, ga, mom.m_hat, k0, ku, U * mom.delta, bad))
    return rows


def estimator_horizon(regime: WindowScheme, eps_grid: Sequence[float], dt: float) -> float:
    """Shortest horizon covering N*Delta for every epsilon (Delta snapped to dt)."""
    spans = [to_steps(r.n * r.delta, dt) for r in (resolve_scheme(regime, e).bind(dt) for e in eps_grid)]
    return max(spans) * dt


def estimator_error_study(
    params: HestonParams,
    eps_grid: Sequence[float],
    regime: WindowScheme,
    lags: Sequence[float] = (0.6,),
    mc: int = 200,
    dt: float = 1e-4,
    seed: int = 0,
    v0: float | None = None,
    jobs: int = 1,
    cache: BundleCache | None = None,
    slope_cut: float | None = 0.05,
    progress: Callable[[int, int], None] | None = None,
) -> EstimatorReport:
    """L2 errors of (theta, kappa, gamma) and of the moment estimators over mc replicates.

    Replicate r is path r of the stream ``seed``; every epsilon reuses it.
    The first entry of ``lags`` is the lag entering kappa and gamma.
    """
    if not eps_grid:
        raise ConfigError("epsilon grid is empty")
    if mc < 2:
        raise ConfigError("need at least two replicates")
    if not lags or lags[0] <= 0:
        raise ConfigError("the estimation lag must be positive")
    eps_grid = sorted((float(e) for e in eps_grid), reverse=True)
    horizon = estimator_horizon(regime, eps_grid, dt)

    def run(r: int) -> list[ReplicateRow]:
        sim = SimConfig(dt=dt, horizon=horizon, n_paths=1, seed=seed, v0=v0, store_v=False, path_offset=r)
        return estimate_replicate(params, sim, regime, eps_grid, lags[0], cache=cache)

    results: list[list[ReplicateRow]] = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for i, res in enumerate(pool.map(run, range(mc))):
                results.append(res)
                if progress:
                    progress(i + 1, mc)
    else:
        for r in range(mc):
            results.append(run(r))
            if progress:
                progress(r + 1, mc)
    rows = [row for res in results for row in res]
    cells, slopes, degenerate = summarize_replicates(rows, params, slope_cut)
    config = {
        "params": params.to_dict(), "eps_grid": eps_grid, "j_rule": regime.j_rule.label, "c_n": regime.c_n,
        "delta": regime.delta, "lags": list(lags), "mc": mc, "dt": dt, "seed": seed, "v0": v0, "horizon": horizon,
        "resolved": {repr(e): asdict(resolve_scheme(regime, e).bind(dt)) for e in eps_grid},
    }
    return EstimatorReport(cells, slopes, degenerate, rows, config)


# --- snapshots ------------------------------------------------------------------------------


@dataclass
class Snapshot:
    times: np.ndarray
    variance: np.ndarray
    realized: dict[str, np.ndarray]
    js: dict[str, int]
    epsilon: float
    seed: int
    path_index: int

    def max_abs_error(self, label: str) -> float:
        return float(np.max(np.abs(self.realized[label] - self.variance)))

    def header(self) -> tuple[str, ...]:
        return ("t", "V") + tuple(f"Y[J={lbl}]" for lbl in self.realized)

    def rows(self) -> list[tuple]:
        cols = [self.times, self.variance] + [self.realized[k] for k in self.realized]
        return [tuple(float(c[i]) for c in cols) for i in range(self.times.size)]


def snapshot(
    params: HestonParams,
    epsilon: float,
    j_rules: Sequence[JRule | int | str],
    dt: float,
    seed: int = 0,
    spacing: float | None = None,
    t_end: float = 1.0,
    path_index: int = 0,
    v0: float | None = None,
    cache: BundleCache | None = None,
) -> Snapshot:
    """(t, V_t, Y_t) on the grid k*spacing in [epsilon, t_end] for one path and several J rules.

    ``spacing`` defaults to Delta = sqrt(epsilon) snapped to dt.
    """
    rules = [JRule.parse(r) for r in j_rules]
    if not rules:
        raise ConfigError("no J rules given")
    js = {r.label: r.resolve(epsilon) for r in rules}
    delta = math.sqrt(epsilon) if spacing is None else spacing
    delta_steps = max(1, round(delta / dt))
    subs = [to_steps(epsilon / j, dt, f"eps/J for J={j}") for j in js.values()]
    stride = reduce(math.gcd, subs + [delta_steps])
    n_steps = to_steps(t_end, dt, "t_end")
    n_steps -= n_steps % stride
    sim = SimConfig(dt=dt, horizon=n_steps * dt, n_paths=1, seed=seed, v0=v0, record_stride=stride,
                    path_offset=path_index)
    bundle = simulate_cached(params, sim, cache=cache)
    eps_steps = to_steps(epsilon, dt, "epsilon")
    k0 = -(-eps_steps // delta_steps)
    ks = np.arange(k0, n_steps // delta_steps + 1)
    times = ks * delta_steps * dt
    idx = ks * delta_steps // stride
    v = bundle.variances[0, idx]
    realized = {lbl: realized_at(bundle, times.tolist(), epsilon, j)[0] for lbl, j in js.items()}
    return Snapshot(times, v, realized, js, epsilon, seed, path_index)
