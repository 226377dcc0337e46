import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hestonio.errors import DomainError, FellerViolation
from hestonio.params import HestonParams, validate_params


def test_reference_values_are_valid():
    p = validate_params(1.7, 4, 2, 0.05, 0)
    assert p.feller_ratio == pytest.approx(3.4, rel=1e-15)


def test_feller_boundary_is_rejected():
    with pytest.raises(FellerViolation):
        validate_params(1, 1, 2, 0, 0)


def test_beta_must_be_interior():
    with pytest.raises(DomainError):
        validate_params(1.7, 4, 2, 0.05, 1.0)
    with pytest.raises(DomainError):
        validate_params(1.7, 4, 2, 0.05, -1.0)


@pytest.mark.parametrize("bad", [(0, 4, 2), (1.7, -4, 2), (1.7, 4, 0), (math.nan, 4, 2), (1.7, math.inf, 2)])
def test_domain_errors(bad):
    with pytest.raises(DomainError):
        validate_params(*bad)


def test_feller_violation_is_a_domain_error():
    assert issubclass(FellerViolation, DomainError)


def test_derived_constants(ref):
    d = ref.derived
    assert d.r == pytest.approx(2.4)
    assert d.Lambda == pytest.approx(0.85)
    assert d.dfr == pytest.approx(2 * ref.theta * d.Lambda)
    assert d.nu(0.0) == 1.0
    with pytest.raises(DomainError):
        d.lam(0.0)
    assert d.lam(1.0) == pytest.approx(0.85 / (1 - math.exp(-1.7)))


def test_unchecked_bypasses_validation():
    p = HestonParams.unchecked(1.0, 4.0, 0.0)
    assert p.gamma == 0.0


@given(
    kappa=st.floats(0.05, 10),
    theta=st.floats(0.05, 10),
    gamma=st.floats(0.05, 5),
)
def test_r_positive_iff_feller(kappa, theta, gamma):
    ratio = kappa * theta / gamma**2
    if ratio > 0.5:
        assert HestonParams(kappa, theta, gamma).derived.r > 0
    else:
        with pytest.raises(FellerViolation):
            HestonParams(kappa, theta, gamma)
