import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hestonio.analytic import params_from_moments, stationary_moments
from hestonio.errors import EstimationDegenerate, InsufficientData
from hestonio.estimators import (
    MomentEstimates,
    ParamEstimate,
    empirical_moments,
    estimate_params,
    lag_index,
    lag_quality_check,
)

series = arrays(np.float64, st.integers(12, 60), elements=st.floats(0.1, 20))


class TestLagIndex:
    def test_examples(self):
        assert lag_index(0.6, 0.1) == 6
        assert lag_index(0.6, math.sqrt(0.005)) == 8
        assert lag_index(0.0, 0.37) == 0

    def test_ties_round_up(self):
        assert lag_index(0.25, 0.5) == 1
        assert lag_index(0.75, 0.5) == 2

    def test_published_realized_lags(self):
        lags = [round(lag_index(0.6, math.sqrt(e)) * math.sqrt(e), 3) for e in (0.1, 0.05, 0.02, 0.01, 0.005)]
        assert lags == pytest.approx([0.632, 0.671, 0.566, 0.6, 0.566], abs=1e-3)

    @given(u=st.floats(0, 10), delta=st.floats(0.01, 2))
    def test_within_one_step(self, u, delta):
        assert abs(u - lag_index(u, delta) * delta) <= delta


class TestEmpiricalMoments:
    def test_constant_series(self):
        m = empirical_moments(np.full(20, 2.5), [0.0, 0.3, 1.0], delta=0.1)
        assert m.m_hat == 2.5
        assert all(v == pytest.approx(0.0, abs=1e-12) for _, v in m.k_hat.values())

    def test_two_points(self):
        m = empirical_moments(np.array([1.0, 3.0]), [0.0], delta=1.0)
        assert m.m_hat == 2.0 and m.lag(0.0) == (0, 1.0)

    def test_formula(self):
        w = np.array([1.0, 4.0, 2.0, 5.0, 3.0])
        m = empirical_moments(w, [2.0], delta=1.0)
        expected = (1 * 2 + 4 * 5 + 2 * 3) / 3 - 3.0**2
        assert m.lag(2.0) == (2, pytest.approx(expected))

    def test_insufficient(self):
        with pytest.raises(InsufficientData):
            empirical_moments(np.ones(5), [0.6], delta=0.1)

    @given(w=series)
    def test_lag_zero_is_variance(self, w):
        m = empirical_moments(w, [0.0], delta=0.1)
        assert m.lag(0.0)[1] == pytest.approx(np.var(w), rel=1e-9, abs=1e-9)
        assert m.lag(0.0)[1] >= -1e-9

    @given(w=series, c=st.floats(-5, 5))
    def test_shift(self, w, c):
        a = empirical_moments(w, [0.0, 0.3], delta=0.1)
        b = empirical_moments(w + c, [0.0, 0.3], delta=0.1)
        assert b.m_hat == pytest.approx(a.m_hat + c, rel=1e-9, abs=1e-9)
        # the lagged sum uses a sub-sample but the full-sample mean, so only lag 0 is exactly shift-free
        assert b.lag(0.0)[1] == pytest.approx(a.lag(0.0)[1], rel=1e-7, abs=1e-7)

    @given(w=series, c=st.floats(0.1, 10))
    def test_scale(self, w, c):
        a = empirical_moments(w, [0.0, 0.3], delta=0.1)
        b = empirical_moments(c * w, [0.0, 0.3], delta=0.1)
        assert b.m_hat == pytest.approx(c * a.m_hat, rel=1e-9)
        for u in (0.0, 0.3):
            assert b.lag(u)[1] == pytest.approx(c * c * a.lag(u)[1], rel=1e-7, abs=1e-7)


def exact_moments(params, u, delta):
    s = stationary_moments(params)
    U = lag_index(u, delta)
    return MomentEstimates(s.m1, {0.0: (0, s.k0), u: (U, float(s.covariance(U * delta)))}, 1000, delta)


class TestEstimateParams:
    def test_exact_moments_recover_params(self, ref):
        est = estimate_params(exact_moments(ref, 0.6, 0.1), 0.6)
        assert (est.kappa_hat, est.theta_hat, est.gamma_hat) == pytest.approx((1.7, 4.0, 2.0), rel=1e-12)

    def test_realized_lag_is_used(self, ref):
        delta = math.sqrt(0.005)
        est = estimate_params(exact_moments(ref, 0.6, delta), 0.6)
        assert est.lag_u == pytest.approx(8 * delta)
        assert est.kappa_hat == pytest.approx(1.7, rel=1e-12)

    def test_matches_moment_map(self, ref):
        m = exact_moments(ref, 0.6, 0.1)
        est = estimate_params(m, 0.6)
        assert (est.kappa_hat, est.theta_hat, est.gamma_hat) == params_from_moments(
            m.m_hat, m.lag(0.0)[1], m.lag(0.6)[1], m.realized_lag(0.6)
        )
        assert 0 < est.ratio < 1

    @pytest.mark.parametrize("k0,ku,m", [(1.0, 1.0, 4.0), (1.0, -0.2, 4.0), (1.0, 0.0, 4.0), (1.0, 0.5, -1.0),
                                         (1.0, 1.3, 4.0)])
    def test_degenerate(self, k0, ku, m):
        mom = MomentEstimates(m, {0.0: (0, k0), 0.6: (6, ku)}, 100, 0.1)
        with pytest.raises(EstimationDegenerate):
            estimate_params(mom, 0.6)

    def test_zero_realized_lag_is_degenerate(self):
        mom = MomentEstimates(4.0, {0.0: (0, 1.0), 0.01: (0, 1.0)}, 100, 0.1)
        with pytest.raises(EstimationDegenerate):
            estimate_params(mom, 0.01)

    @given(w=series, c=st.floats(0.1, 10))
    def test_kappa_invariant_under_scaling(self, w, c):
        assume(np.var(w) > 1e-6 * np.mean(w) ** 2)
        a = empirical_moments(w, [0.0, 0.3], delta=0.1)
        b = empirical_moments(c * w, [0.0, 0.3], delta=0.1)
        try:
            ea = estimate_params(a, 0.3)
        except EstimationDegenerate:
            return
        eb = estimate_params(b, 0.3)
        assert eb.kappa_hat == pytest.approx(ea.kappa_hat, rel=1e-6)
        assert eb.theta_hat == pytest.approx(c * ea.theta_hat, rel=1e-9)


class TestLagQuality:
    def _est(self, kappa, u):
        return ParamEstimate(4.0, kappa, 2.0, u, 1.0, math.exp(-kappa * u))

    def test_examples(self):
        ok = lag_quality_check(self._est(1.7, 0.6))
        assert ok.passed and ok.correlation == pytest.approx(0.3605949401730783, rel=1e-14)
        assert not lag_quality_check(self._est(1.7, 0.05)).passed
        assert lag_quality_check(self._est(1.7, 0.05)).correlation == pytest.approx(0.9185122844014574)
        assert not lag_quality_check(self._est(1.7, 0.71)).passed
