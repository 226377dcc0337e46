"""Heston model parameters and the constants derived from them."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import DomainError, FellerViolation


@dataclass(frozen=True)
class DerivedConstants:
    """Constants of the variance diffusion that recur in every closed form.

    ``r`` is the Bessel order of the transition density, ``Lambda`` the rate of
    the stationary Gamma law and ``dfr`` the degrees of freedom of the rescaled
    non-central chi-squared transition law.
    """

    kappa: float
    r: float
    Lambda: float
    dfr: float

    def nu(self, T: float) -> float:
        return math.exp(-self.kappa * T)

    def lam(self, T: float) -> float:
        """Rescaling factor ``Lambda / (1 - nu(T))``; only defined for T > 0."""
        if T <= 0:
            raise DomainError(f"lambda(T) requires T > 0, got {T}")
        # expm1 keeps 1 - exp(-kT) accurate for small T
        return self.Lambda / -math.expm1(-self.kappa * T)


@dataclass(frozen=True)
class HestonParams:
    """Parameters of the joint return / variance SDE system.

    dR = mu dt + sqrt(V) dZ,  dV = kappa (theta - V) dt + gamma sqrt(V) dB,
    with E[dZ dB] = beta dt.  Construction validates the domain and the strict
    Feller condition; use :meth:`unchecked` for degenerate test fixtures.
    """

    kappa: float
    theta: float
    gamma: float
    mu: float = 0.0
    beta: float = 0.0

    def __post_init__(self) -> None:
        for name in ("kappa", "theta", "gamma", "mu", "beta"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        for name in ("kappa", "theta", "gamma"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if not -1.0 < self.beta < 1.0:
            raise DomainError(f"beta must lie in (-1, 1), got {self.beta}")
        if self.kappa * self.theta / self.gamma**2 <= 0.5:
            raise FellerViolation(
                f"Feller condition kappa*theta/gamma^2 > 1/2 violated: "
                f"2*kappa*theta/gamma^2 = {self.feller_ratio:.6g} <= 1"
            )

    @classmethod
    def unchecked(
        cls, kappa: float, theta: float, gamma: float, mu: float = 0.0, beta: float = 0.0
    ) -> "HestonParams":
        """Build parameters without any validation (e.g. gamma = 0 fixtures)."""
        obj = object.__new__(cls)
        for name, value in zip(("kappa", "theta", "gamma", "mu", "beta"), (kappa, theta, gamma, mu, beta)):
            object.__setattr__(obj, name, float(value))
        return obj

    @property
    def feller_ratio(self) -> float:
        """2 kappa theta / gamma^2; the Feller condition holds iff this exceeds 1."""
        return 2.0 * self.kappa * self.theta / self.gamma**2

    @property
    def derived(self) -> DerivedConstants:
        Lambda = 2.0 * self.kappa / self.gamma**2
        r = self.feller_ratio - 1.0
        return DerivedConstants(kappa=self.kappa, r=r, Lambda=Lambda, dfr=2.0 * r + 2.0)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def validate_params(kappa: float, theta: float, gamma: float, mu: float = 0.0, beta: float = 0.0) -> HestonParams:
    """Return validated :class:`HestonParams`.

    Raises DomainError for non-finite or out-of-range inputs and FellerViolation
    when kappa*theta/gamma^2 <= 1/2.
    """
    return HestonParams(kappa, theta, gamma, mu, beta)


#: Parameter values used throughout the numerical study.
REFERENCE_PARAMS = HestonParams(kappa=1.7, theta=4.0, gamma=2.0, mu=0.05, beta=0.0)
