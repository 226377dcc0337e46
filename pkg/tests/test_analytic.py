import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hestonio.analytic import (
    conditional_mean,
    conditional_moment_q,
    conditional_second_moment,
    ncchi2_moment,
    params_from_moments,
    stationary_moment_q,
    stationary_moments,
)
from hestonio.errors import DomainError, NumericOverflow
from hestonio.params import HestonParams

feller_params = st.builds(
    lambda k, t, ratio: HestonParams(k, t, math.sqrt(2 * k * t / ratio)),
    st.floats(0.2, 5.0),
    st.floats(0.2, 8.0),
    st.floats(1.05, 8.0),
)


class TestConditionalMoments:
    def test_fixed_point(self, ref):
        for T in (0.0, 0.3, 2.0, 40.0):
            assert conditional_mean(ref, ref.theta, T) == pytest.approx(ref.theta, rel=1e-15)

    def test_zero_time(self, ref):
        assert conditional_mean(ref, 2.0, 0.0) == 2.0
        assert conditional_second_moment(ref, 2.0, 0.0) == pytest.approx(4.0, rel=1e-15)
        assert conditional_moment_q(ref, 2.0, 0.0, 3) == pytest.approx(8.0, rel=1e-14)

    def test_frozen_mean(self, ref):
        # 4 - 2 exp(-1.7)
        assert conditional_mean(ref, 2.0, 1.0) == pytest.approx(3.6346329518945306, rel=1e-14)

    def test_long_time_limit(self, ref):
        st_ = stationary_moments(ref)
        assert conditional_second_moment(ref, 1.0, 60.0) == pytest.approx(st_.m2, rel=1e-12)

    def test_third_moment_against_mpmath_quadrature(self, ref):
        # 50-digit quadrature of z^3 against the Bessel form of the density
        assert conditional_moment_q(ref, 4.0, 0.5, 3) == pytest.approx(116.887770653842555, rel=1e-13)

    def test_invalid_state(self, ref):
        with pytest.raises(DomainError):
            conditional_mean(ref, 0.0, 1.0)
        with pytest.raises(DomainError):
            conditional_moment_q(ref, 1.0, -1.0, 2)
        with pytest.raises(DomainError):
            conditional_moment_q(ref, 1.0, 1.0, 0)

    def test_overflow_is_signalled(self, ref):
        with pytest.raises(NumericOverflow):
            conditional_moment_q(ref, 1e3, 1.0, 200)

    def test_low_orders_agree_on_random_draws(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            k, t, ratio = rng.uniform(0.1, 6), rng.uniform(0.1, 10), rng.uniform(1.01, 10)
            p = HestonParams(k, t, math.sqrt(2 * k * t / ratio))
            y, T = rng.uniform(0.01, 30), rng.uniform(0.0, 6)
            assert conditional_moment_q(p, y, T, 1) == pytest.approx(conditional_mean(p, y, T), rel=1e-12)
            assert conditional_moment_q(p, y, T, 2) == pytest.approx(conditional_second_moment(p, y, T), rel=1e-12)

    @given(p=feller_params, y=st.floats(0.01, 50), T=st.floats(0, 10))
    def test_mean_error_decays_exactly(self, p, y, T):
        gap = abs(conditional_mean(p, y, T) - p.theta)
        assert gap == pytest.approx(math.exp(-p.kappa * T) * abs(y - p.theta), rel=1e-9, abs=1e-12)

    @given(p=feller_params, y=st.floats(0.01, 50), T1=st.floats(0, 5), dT=st.floats(0.01, 5))
    def test_mean_approaches_theta_monotonically(self, p, y, T1, dT):
        a = abs(conditional_mean(p, y, T1) - p.theta)
        b = abs(conditional_mean(p, y, T1 + dT) - p.theta)
        assert b <= a + 1e-12


class TestNonCentralChi2:
    def test_first_moment(self):
        assert ncchi2_moment(1, 3.7, 2.2) == pytest.approx(5.9, rel=1e-15)

    def test_central_second_moment(self):
        assert ncchi2_moment(2, 2, 0) == 8.0

    def test_fourth_moment_frozen(self):
        # mpmath quadrature of the Poisson-mixture density
        assert ncchi2_moment(4, 3, 1.5) == pytest.approx(3812.0625, rel=1e-14)

    @pytest.mark.parametrize("dfr", [0.5, 1.0, 2.0, 6.8, 11.3])
    def test_central_product(self, dfr):
        for q in range(1, 9):
            prod = math.prod(dfr + 2 * i for i in range(q))
            assert ncchi2_moment(q, dfr, 0.0) == pytest.approx(prod, rel=1e-13)

    def test_against_scipy_moments(self):
        from scipy import stats

        for dfr, ncp in [(3.0, 1.5), (6.8, 0.3), (2.5, 12.0)]:
            for q in range(1, 6):
                assert ncchi2_moment(q, dfr, ncp) == pytest.approx(stats.ncx2(dfr, ncp).moment(q), rel=1e-9)

    def test_domain(self):
        with pytest.raises(DomainError):
            ncchi2_moment(2, 0.0, 1.0)
        with pytest.raises(DomainError):
            ncchi2_moment(2, 1.0, -1.0)


class TestStationary:
    def test_reference_values(self, ref):
        s = stationary_moments(ref)
        assert s.m1 == 4.0
        assert s.k0 == pytest.approx(4.705882352941177, rel=1e-15)
        assert s.k0 == pytest.approx(s.m2 - s.m1**2, rel=1e-14)

    def test_covariance_ratio_exact(self, ref):
        s = stationary_moments(ref)
        u = np.linspace(0, 4, 41)
        np.testing.assert_allclose(s.covariance(u) / s.k0, np.exp(-ref.kappa * u), rtol=1e-15)
        assert np.all(np.diff(s.covariance(u)) < 0)

    def test_higher_moments_match_gamma_law(self, ref):
        from scipy import stats

        d = ref.derived
        law = stats.gamma(d.r + 1, scale=1 / d.Lambda)
        for q in range(1, 6):
            assert stationary_moment_q(ref, q) == pytest.approx(law.moment(q), rel=1e-12)


class TestParamsFromMoments:
    def test_frozen_kappa(self):
        k0 = 16 / 3.4
        kappa, theta, gamma = params_from_moments(4.0, k0, k0 * math.exp(-1.02), 0.6)
        assert (kappa, theta, gamma) == pytest.approx((1.7, 4.0, 2.0), rel=1e-13)

    @given(p=feller_params, u=st.floats(0.01, 3.0))
    def test_round_trip(self, p, u):
        s = stationary_moments(p)
        out = params_from_moments(s.m1, s.k0, float(s.covariance(u)), u)
        assert out == pytest.approx((p.kappa, p.theta, p.gamma), rel=1e-10)

    def test_round_trip_reference_tight(self, ref):
        s = stationary_moments(ref)
        for u in np.random.default_rng(1).uniform(0.1, 2.0, 100):
            out = params_from_moments(s.m1, s.k0, float(s.covariance(u)), float(u))
            assert out == pytest.approx((1.7, 4.0, 2.0), rel=1e-12)

    @pytest.mark.parametrize(
        "args",
        [(4.0, 1.0, 1.0, 0.6), (4.0, 1.0, 0.0, 0.6), (4.0, 1.0, -0.1, 0.6), (0.0, 1.0, 0.5, 0.6),
         (4.0, 0.0, 0.5, 0.6), (4.0, 1.0, 0.5, 0.0), (4.0, 1.0, 1.5, 0.6)],
    )
    def test_domain_errors(self, args):
        with pytest.raises(DomainError):
            params_from_moments(*args)
