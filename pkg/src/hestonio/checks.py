"""Closed-form identities cross-checked against independent numerical routes.

Each check computes a quantity two ways (closed form vs. quadrature or
scipy) and reports the worst discrepancy against a tolerance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize, stats

from .analytic import (
    conditional_mean,
    conditional_moment_q,
    conditional_second_moment,
    ncchi2_moment,
    params_from_moments,
    stationary_moments,
)
from .density import (
    ncchi2_moment_quadrature,
    quadrature_upper,
    stationary_density,
    stationary_moment_quadrature,
    transition_density,
    transition_moment_quadrature,
)
from .params import HestonParams


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _result(name: str, worst: float, tol: float, detail: str = "") -> CheckResult:
    return CheckResult(name, bool(worst <= tol), float(worst), tol, detail)


def check_feller_ratio(params: HestonParams, expected: float | None = None) -> CheckResult:
    ratio = params.feller_ratio
    if expected is None:
        return CheckResult("feller_ratio", ratio > 1.0, ratio, 1.0, "2 kappa theta / gamma^2 > 1")
    return _result("feller_ratio", abs(ratio - expected), 1e-12, f"ratio={ratio!r}, expected {expected!r}")


def check_round_trip(params: HestonParams, rng: np.random.Generator, n: int = 100) -> CheckResult:
    st = stationary_moments(params)
    worst = 0.0
    for u in rng.uniform(0.1, 2.0, n):
        k, th, g = params_from_moments(st.m1, st.k0, float(st.covariance(u)), float(u))
        worst = max(worst, _rel(k, params.kappa), _rel(th, params.theta), _rel(g, params.gamma))
    return _result("moment_map_round_trip", worst, 1e-12, f"{n} lags in (0.1, 2)")


def check_low_order_consistency(params: HestonParams, rng: np.random.Generator, n: int = 1000) -> CheckResult:
    worst = 0.0
    for y, T in zip(rng.uniform(0.05, 20.0, n), rng.uniform(1e-3, 5.0, n)):
        worst = max(
            worst,
            _rel(conditional_moment_q(params, y, T, 1), conditional_mean(params, y, T)),
            _rel(conditional_moment_q(params, y, T, 2), conditional_second_moment(params, y, T)),
        )
    return _result("conditional_moment_q_low_order", worst, 1e-12, f"{n} draws, q=1,2")


def check_transition_moments(params: HestonParams, rng: np.random.Generator, n: int = 50, q_max: int = 4) -> CheckResult:
    worst = 0.0
    for y, T in zip(rng.uniform(0.5, 10.0, n), rng.uniform(0.05, 3.0, n)):
        for q in range(1, q_max + 1):
            worst = max(worst, _rel(transition_moment_quadrature(params, y, T, q), conditional_moment_q(params, y, T, q)))
    return _result("transition_moments_vs_quadrature", worst, 1e-6, f"{n} (y, T) pairs, q<={q_max}")


def check_transition_normalization(params: HestonParams, y: float = 2.0, T: float = 0.5) -> CheckResult:
    upper = quadrature_upper(params, 1, y, T)
    mass, _ = integrate.quad(lambda z: transition_density(params, z, y, T) if z > 0 else 0.0, 0.0, upper,
                             epsabs=1e-12, limit=500)
    return _result("transition_density_mass", abs(mass - 1.0), 1e-6, f"y={y}, T={T}")


def check_ncchi2_moments(rng: np.random.Generator, n: int = 12, q_max: int = 6) -> CheckResult:
    worst = 0.0
    draws = [(3.0, 1.5)] + list(zip(rng.uniform(2.0, 12.0, n), rng.uniform(0.0, 20.0, n)))
    for dfr, ncp in draws:
        for q in range(1, q_max + 1):
            worst = max(worst, _rel(ncchi2_moment(q, dfr, ncp), ncchi2_moment_quadrature(q, dfr, ncp)))
    return _result("ncchi2_moments_vs_quadrature", worst, 1e-8, f"{len(draws)} (dfr, ncp) pairs, q<={q_max}")


def check_central_chi2(q_max: int = 8) -> CheckResult:
    worst = 0.0
    for dfr in (0.5, 1.0, 2.0, 3.4, 7.0):
        for q in range(1, q_max + 1):
            prod = math.prod(dfr + 2 * i for i in range(q))
            worst = max(worst, _rel(ncchi2_moment(q, dfr, 0.0), prod))
    return _result("central_chi2_product", worst, 1e-13)


def check_stationary_density(params: HestonParams) -> list[CheckResult]:
    st = stationary_moments(params)
    d = params.derived
    mass = stationary_moment_quadrature(params, 0)
    mean = stationary_moment_quadrature(params, 1)
    second = stationary_moment_quadrature(params, 2)
    mode = optimize.minimize_scalar(lambda z: -stationary_density(params, z), bounds=(1e-9, 10 * st.m1),
                                    method="bounded", options={"xatol": 1e-10}).x
    return [
        _result("stationary_mass", abs(mass - 1.0), 1e-8),
        _result("stationary_mean", abs(mean - st.m1), 1e-8),
        _result("stationary_second_moment", _rel(second, st.m2), 1e-8),
        _result("stationary_mode", abs(mode - d.r / d.Lambda), 1e-6, f"r/Lambda={d.r / d.Lambda!r}"),
    ]


def check_covariance_ratio(params: HestonParams) -> CheckResult:
    st = stationary_moments(params)
    u = np.linspace(0.0, 5.0, 101)
    worst = float(np.max(np.abs(st.covariance(u) / st.k0 - np.exp(-params.kappa * u))))
    return _result("covariance_ratio", worst, 1e-14)


def check_mean_decay(params: HestonParams, rng: np.random.Generator, n: int = 200) -> CheckResult:
    worst = 0.0
    for y, T in zip(rng.uniform(0.05, 20.0, n), rng.uniform(0.0, 5.0, n)):
        gap = abs(conditional_mean(params, y, T) - params.theta)
        worst = max(worst, abs(gap - math.exp(-params.kappa * T) * abs(y - params.theta)) / max(1.0, abs(y - params.theta)))
    return _result("mean_decay_rate", worst, 1e-13, "|M1 - theta| = exp(-kappa T)|y - theta|")


def check_rescaled_density(params: HestonParams, y: float = 2.0, T: float = 0.7) -> CheckResult:
    """2 lambda_T V_T is non-central chi-squared; compare densities pointwise."""
    d = params.derived
    lam = d.lam(T)
    ncp = 2.0 * lam * y * d.nu(T)
    z = np.linspace(0.05, 15.0, 60)
    ours = transition_density(params, z, y, T) / (2.0 * lam)
    ref = stats.ncx2.pdf(2.0 * lam * z, d.dfr, ncp)
    worst = float(np.max(np.abs(ours - ref) / np.maximum(ref, 1e-300)))
    return _result("rescaled_density_vs_ncx2", worst, 1e-8, f"dfr={d.dfr!r}, ncp={ncp!r}")


def run_all(params: HestonParams, seed: int = 0, expected_ratio: float | None = None,
            progress: Callable[[str], None] | None = None) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    steps: list[Callable[[], CheckResult | list[CheckResult]]] = [
        lambda: check_feller_ratio(params, expected_ratio),
        lambda: check_round_trip(params, rng),
        lambda: check_low_order_consistency(params, rng),
        lambda: check_transition_normalization(params),
        lambda: check_transition_moments(params, rng),
        lambda: check_ncchi2_moments(rng),
        check_central_chi2,
        lambda: check_stationary_density(params),
        lambda: check_covariance_ratio(params),
        lambda: check_mean_decay(params, rng),
        lambda: check_rescaled_density(params),
    ]
    out: list[CheckResult] = []
    for step in steps:
        res = step()
        for r in res if isinstance(res, list) else [res]:
            out.append(r)
            if progress:
                progress(r.name)
    return out
