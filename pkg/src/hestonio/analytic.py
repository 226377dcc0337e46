"""Closed-form moments of the variance diffusion and the moment-to-parameter map."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, NumericOverflow
from .params import HestonParams


def _moments_from_cumulants(cumulants: Sequence[float]) -> list[float]:
    """Raw moments mu_0..mu_q from cumulants c_1..c_q.

    mu_n = sum_{i<n} C(n-1, i) c_{n-i} mu_i  (complete Bell recurrence).
    """
    q = len(cumulants)
    mu = [1.0] + [0.0] * q
    for n in range(1, q + 1):
        acc = 0.0
        for i in range(n):
            acc += math.comb(n - 1, i) * cumulants[n - i - 1] * mu[i]
        mu[n] = acc
    return mu


def _check_order(q: int) -> int:
    if int(q) != q or q < 1:
        raise DomainError(f"moment order must be an integer >= 1, got {q}")
    return int(q)


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericOverflow(f"{what} exceeds the floating point range")
    return value


def ncchi2_moment(q: int, dfr: float, ncp: float) -> float:
    """Raw moment of order q of the non-central chi-squared law.

    Uses the cumulants c_n = 2^(n-1) (n-1)! (dfr + n*ncp).
    """
    q = _check_order(q)
    if dfr <= 0 or ncp < 0:
        raise DomainError(f"need dfr > 0 and ncp >= 0, got dfr={dfr}, ncp={ncp}")
    try:
        cumulants = [2.0 ** (n - 1) * math.factorial(n - 1) * (dfr + n * ncp) for n in range(1, q + 1)]
        value = _moments_from_cumulants(cumulants)[q]
    except OverflowError:
        value = math.inf
    return _finite(value, f"moment of order {q}")


def conditional_mean(params: HestonParams, y: float, T: float) -> float:
    """E[V_T | V_0 = y] = (1 - nu_T) theta + nu_T y."""
    _check_state(y, T)
    nu = math.exp(-params.kappa * T)
    return -math.expm1(-params.kappa * T) * params.theta + nu * y


def conditional_second_moment(params: HestonParams, y: float, T: float) -> float:
    """E[V_T^2 | V_0 = y]."""
    _check_state(y, T)
    nu = math.exp(-params.kappa * T)
    one_minus = -math.expm1(-params.kappa * T)
    s = params.theta + 1.0 / params.derived.Lambda
    return y * y * nu * nu + 2.0 * y * nu * one_minus * s + one_minus**2 * params.theta * s


def conditional_moment_q(params: HestonParams, y: float, T: float, q: int) -> float:
    """E[V_T^q | V_0 = y] for any integer q >= 1.

    V_T is a scaled non-central chi-squared variable: V_T = X / (2 lambda_T)
    with X ~ ncchi2(dfr, 2 lambda_T y nu_T).  The moments are assembled from
    the cumulants of V_T directly, i.e. the homogeneous form
    H_q((1 - nu_T) / (2 Lambda), y nu_T), which stays finite as T -> 0.
    """
    q = _check_order(q)
    _check_state(y, T)
    d = params.derived
    scale = -math.expm1(-params.kappa * T) / (2.0 * d.Lambda)  # 1 / (2 lambda_T)
    shift = y * math.exp(-params.kappa * T)
    try:
        cumulants = [
            2.0 ** (n - 1) * math.factorial(n - 1) * (scale**n * d.dfr + n * scale ** (n - 1) * shift)
            for n in range(1, q + 1)
        ]
        value = _moments_from_cumulants(cumulants)[q]
    except OverflowError:
        value = math.inf
    return _finite(value, f"conditional moment of order {q}")


def _check_state(y: float, T: float) -> None:
    if not y > 0:
        raise DomainError(f"initial variance must be positive, got {y}")
    if not T >= 0:
        raise DomainError(f"time must be non-negative, got {T}")


@dataclass(frozen=True)
class StationaryMoments:
    """Mean, second moment and autocovariance of the stationary variance."""

    m1: float
    m2: float
    k0: float
    kappa: float

    def covariance(self, u: float | np.ndarray) -> float | np.ndarray:
        """K(u) = K(0) exp(-kappa |u|)."""
        return self.k0 * np.exp(-self.kappa * np.abs(u))


def stationary_moments(params: HestonParams) -> StationaryMoments:
    Lambda = params.derived.Lambda
    theta = params.theta
    return StationaryMoments(
        m1=theta,
        m2=theta * theta + theta / Lambda,
        k0=theta * params.gamma**2 / (2.0 * params.kappa),
        kappa=params.kappa,
    )


def stationary_moment_q(params: HestonParams, q: int) -> float:
    """E_psi[V^q] for the stationary Gamma law."""
    q = _check_order(q)
    d = params.derived
    return ncchi2_moment(q, d.dfr, 0.0) / (2.0 * d.Lambda) ** q


def params_from_moments(m1: float, K0: float, Ku: float, u: float) -> tuple[float, float, float]:
    """Invert (mean, variance, lag-u covariance) into (kappa, theta, gamma)."""
    if not m1 > 0:
        raise DomainError(f"mean must be positive, got {m1}")
    if not u > 0:
        raise DomainError(f"lag must be positive, got {u}")
    if not K0 > 0:
        raise DomainError(f"variance must be positive, got {K0}")
    if not 0 < Ku < K0:
        raise DomainError(f"need 0 < K(u) < K(0), got K(u)={Ku}, K(0)={K0}")
    kappa = -math.log(Ku / K0) / u
    theta = m1
    gamma = math.sqrt(2.0 * K0 * kappa / theta)
    return kappa, theta, gamma
