"""Transition and stationary densities of the variance diffusion.

Everything is composed in log-space: the rescaling factor lambda_T grows like
1/T, so the exponential and Bessel factors of the transition density overflow
long before their product does.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import integrate, stats

from .analytic import conditional_mean, conditional_second_moment, stationary_moments
from .errors import DomainError
from .params import HestonParams

_SERIES_RTOL = 1e-16
_DEBYE_TERMS = 12


@lru_cache(maxsize=None)
def _debye_polynomials(n_terms: int = _DEBYE_TERMS) -> tuple[np.ndarray, ...]:
    """Coefficients (ascending powers of p) of the Debye polynomials u_0..u_{n-1}.

    u_{k+1}(p) = p^2 (1 - p^2) u_k'(p) / 2 + (1/8) int_0^p (1 - 5 t^2) u_k(t) dt,
    carried out in exact rational arithmetic.
    """
    polys = [[Fraction(1)]]
    for _ in range(n_terms - 1):
        u = polys[-1]
        deriv = [i * c for i, c in enumerate(u)][1:] or [Fraction(0)]
        # p^2 (1 - p^2) u'(p) / 2
        first = [Fraction(0)] * (len(deriv) + 4)
        for i, c in enumerate(deriv):
            first[i + 2] += c / 2
            first[i + 4] -= c / 2
        # (1 - 5 t^2) u(t), integrated from 0 to p, over 8
        prod = [Fraction(0)] * (len(u) + 2)
        for i, c in enumerate(u):
            prod[i] += c
            prod[i + 2] -= 5 * c
        second = [Fraction(0)] + [c / (i + 1) / 8 for i, c in enumerate(prod)]
        size = max(len(first), len(second))
        nxt = [Fraction(0)] * size
        for i, c in enumerate(first):
            nxt[i] += c
        for i, c in enumerate(second):
            nxt[i] += c
        while len(nxt) > 1 and nxt[-1] == 0:
            nxt.pop()
        polys.append(nxt)
    return tuple(np.array([float(c) for c in p]) for p in polys)


def _log_bessel_series(nu: float, x: float) -> float:
    half_sq = 0.25 * x * x
    log_scale = 0.0
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= half_sq / (k * (k + nu))
        total += term
        if total > 1e250:
            total *= 1e-250
            term *= 1e-250
            log_scale += 250.0 * math.log(10.0)
        # terms increase until k(k + nu) exceeds x^2 / 4, then decay geometrically
        if k * (k + nu) > half_sq and term < _SERIES_RTOL * total:
            break
    return nu * math.log(0.5 * x) - math.lgamma(nu + 1.0) + math.log(total) + log_scale


def _log_bessel_debye(nu: float, x: float) -> float:
    z = x / nu
    root = math.sqrt(1.0 + z * z)
    p = 1.0 / root
    eta = root + math.log(z / (1.0 + root))
    total = 0.0
    inv_nu_k = 1.0
    for coeffs in _debye_polynomials():
        term = np.polynomial.polynomial.polyval(p, coeffs) * inv_nu_k
        total += term
        if abs(term) < _SERIES_RTOL * abs(total):
            break
        inv_nu_k /= nu
    return nu * eta - 0.5 * math.log(2.0 * math.pi * nu) - 0.5 * math.log(root) + math.log(total)


def log_bessel_i(nu: float, x: float) -> float:
    """log I_nu(x) for nu >= 0, x >= 0.

    Ascending power series for x <= max(30, 2 nu), uniform (Debye) asymptotic
    expansion beyond.
    """
    if nu < 0:
        raise DomainError(f"order must be non-negative, got {nu}")
    if x < 0:
        raise DomainError(f"argument must be non-negative, got {x}")
    if x == 0.0:
        return 0.0 if nu == 0 else -math.inf
    if x <= max(30.0, 2.0 * nu) or nu == 0:
        return _log_bessel_series(nu, x)
    return _log_bessel_debye(nu, x)


def bessel_i(nu: float, x: float) -> float:
    return math.exp(log_bessel_i(nu, x))


def _safe_exp(value: float) -> float:
    # underflow in the far tails is reported as an exact zero
    return math.exp(value) if value > -745.0 else 0.0


def log_transition_density(params: HestonParams, z: float, y: float, T: float) -> float:
    if not (z > 0 and y > 0 and T > 0):
        raise DomainError(f"need z > 0, y > 0, T > 0, got z={z}, y={y}, T={T}")
    d = params.derived
    lam = d.lam(T)
    ynu = y * d.nu(T)
    return (
        math.log(lam)
        + 0.5 * d.r * (math.log(z) - math.log(ynu))
        - lam * (z + ynu)
        + log_bessel_i(d.r, 2.0 * lam * math.sqrt(z * ynu))
    )


def transition_density(params: HestonParams, z, y: float, T: float):
    """Density of V_T at z given V_0 = y."""
    if np.ndim(z) == 0:
        return _safe_exp(log_transition_density(params, float(z), y, T))
    return np.array([_safe_exp(log_transition_density(params, float(v), y, T)) for v in np.ravel(z)]).reshape(
        np.shape(z)
    )


def log_stationary_density(params: HestonParams, z: float) -> float:
    if not z > 0:
        raise DomainError(f"need z > 0, got {z}")
    d = params.derived
    return math.log(d.Lambda) + d.r * math.log(d.Lambda * z) - d.Lambda * z - math.lgamma(d.r + 1.0)


def stationary_density(params: HestonParams, z):
    """Gamma(r + 1, Lambda) density of the stationary variance."""
    if np.ndim(z) == 0:
        return _safe_exp(log_stationary_density(params, float(z)))
    return np.array([_safe_exp(log_stationary_density(params, float(v))) for v in np.ravel(z)]).reshape(np.shape(z))


# --- quadrature oracles -------------------------------------------------------------


def quadrature_upper(params: HestonParams, q: int = 1, y: float | None = None, T: float | None = None) -> float:
    """Finite integration cut for Gamma-type tails.

    m + 12 sd max(1, sqrt(q)) plus a margin in units of 1/Lambda: every density
    here decays at least like exp(-Lambda z), whatever its spread.
    """
    st = stationary_moments(params)
    mean, sd = st.m1, math.sqrt(st.k0)
    if y is not None and T is not None:
        m1 = conditional_mean(params, y, T)
        var = max(conditional_second_moment(params, y, T) - m1 * m1, 0.0)
        mean, sd = max(mean, m1), max(sd, math.sqrt(var))
    return mean + 12.0 * sd * max(1.0, math.sqrt(q)) + (40.0 + 4.0 * q) / params.derived.Lambda


def _quad(f, upper: float, points: list[float]) -> float:
    pts = sorted(p for p in points if 0.0 < p < upper)
    value, _ = integrate.quad(f, 0.0, upper, epsabs=1e-10, epsrel=1e-12, limit=500, points=pts or None)
    return value


def transition_moment_quadrature(params: HestonParams, y: float, T: float, q: int) -> float:
    """int_0^inf z^q p(z, y) dz by adaptive Gauss-Kronrod quadrature."""
    upper = quadrature_upper(params, q, y, T)
    m1 = conditional_mean(params, y, T)
    sd = math.sqrt(max(conditional_second_moment(params, y, T) - m1 * m1, 0.0))
    points = [m1 - 3 * sd, m1 - sd, m1, m1 + sd, m1 + 3 * sd]
    return _quad(lambda z: z**q * transition_density(params, z, y, T) if z > 0 else 0.0, upper, points)


def stationary_moment_quadrature(params: HestonParams, q: int) -> float:
    st = stationary_moments(params)
    upper = quadrature_upper(params, q)
    sd = math.sqrt(st.k0)
    points = [st.m1 - sd, st.m1, st.m1 + sd]
    return _quad(lambda z: z**q * stationary_density(params, z) if z > 0 else 0.0, upper, points)


def ncchi2_moment_quadrature(q: int, dfr: float, ncp: float) -> float:
    """Quadrature of z^q against the non-central chi-squared density."""
    mean = dfr + ncp
    sd = math.sqrt(2.0 * (dfr + 2.0 * ncp))
    # the tail decays like z^(q + dfr/2) exp(-z/2) whatever sd is
    upper = mean + 12.0 * sd * max(1.0, math.sqrt(q)) + 80.0 + 8.0 * q
    dist = stats.ncx2(dfr, ncp) if ncp > 0 else stats.chi2(dfr)
    return _quad(lambda z: z**q * dist.pdf(z) if z > 0 else 0.0, upper, [1.0, mean - sd, mean, mean + sd])
