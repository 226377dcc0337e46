import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hestonio.errors import ConfigError, DomainError, GridMismatch, HorizonTooShort
from hestonio.params import REFERENCE_PARAMS
from hestonio.realized import (
    JRule,
    WindowScheme,
    realized_at,
    realized_series,
    realized_volatility,
    resolve_scheme,
)
from hestonio.sim import PathBundle, SimConfig, simulate


def bundle_from(returns, dt, stride=1, start=0.0):
    returns = np.atleast_2d(np.asarray(returns, dtype=float))
    times = start + dt * stride * np.arange(returns.shape[1])
    return PathBundle(times, returns, None, seed=0, path_start=0, dt=dt, stride=stride)


class TestRealizedVolatility:
    def test_constant_path(self):
        assert realized_volatility(np.full(11, 3.0), 1.0, 1.0, 10, 0.1) == 0.0

    def test_direct_evaluation(self):
        r = np.cumsum([0.0, 0.1, -0.2, 0.3])
        assert realized_volatility(r, 1.0, 1.0, 3, 1 / 3) == pytest.approx(0.14, rel=1e-14)

    def test_off_grid_sub_step(self):
        with pytest.raises(GridMismatch):
            realized_volatility(np.zeros(101), 1.0, 0.5, 3, 0.01)

    def test_off_grid_time(self):
        with pytest.raises(GridMismatch):
            realized_volatility(np.zeros(101), 0.555, 0.5, 5, 0.01)

    def test_window_before_start(self):
        with pytest.raises(DomainError):
            realized_volatility(np.zeros(101), 0.3, 0.5, 5, 0.01)

    def test_two_dimensional_input(self):
        rng = np.random.default_rng(0)
        r = rng.standard_normal((3, 101)).cumsum(axis=1)
        both = realized_volatility(r, 0.8, 0.4, 8, 0.01)
        for i in range(3):
            assert both[i] == pytest.approx(realized_volatility(r[i], 0.8, 0.4, 8, 0.01), rel=1e-14)

    @given(
        incs=arrays(np.float64, 40, elements=st.floats(-5, 5)),
        c=st.floats(-20, 20),
    )
    def test_scale_equivariance(self, incs, c):
        r = np.concatenate([[0.0], np.cumsum(incs)])
        y = realized_volatility(r, 0.4, 0.4, 20, 0.01)
        yc = realized_volatility(c * r, 0.4, 0.4, 20, 0.01)
        assert yc == pytest.approx(c * c * y, rel=1e-9, abs=1e-9)

    @given(incs=arrays(np.float64, 30, elements=st.floats(-5, 5)), split=st.integers(1, 29))
    def test_window_additivity(self, incs, split):
        r = np.concatenate([[0.0], np.cumsum(incs)])
        h = 0.01
        full = 0.3 * realized_volatility(r, 0.3, 0.3, 30, h)
        a = split * h * realized_volatility(r, split * h, split * h, split, h)
        b = (30 - split) * h * realized_volatility(r, 0.3, (30 - split) * h, 30 - split, h)
        assert full == pytest.approx(a + b, rel=1e-9, abs=1e-12)

    def test_many_partitions_track_variance(self):
        cfg = SimConfig(dt=1e-6, horizon=1.0, n_paths=20, seed=1, record_start=0.99)
        b = simulate(REFERENCE_PARAMS, cfg)
        v = b.variances[:, -1]
        fine = realized_at(b, [1.0], 0.01, 10_000)[:, 0]
        coarse = realized_at(b, [1.0], 0.01, 10)[:, 0]
        assert np.mean(np.abs(fine - v)) < 0.5 * np.mean(np.abs(coarse - v))


class TestJRule:
    @pytest.mark.parametrize("spec,eps,j", [("1/eps", 0.01, 100), ("inverse", 0.1, 10), ("1/eps^2", 0.05, 400),
                                            (10, 0.3, 10), ("40", 0.01, 40), ("1/eps^2", 0.1, 100)])
    def test_resolve(self, spec, eps, j):
        assert JRule.parse(spec).resolve(eps) == j

    def test_labels(self):
        assert [JRule.parse(s).label for s in ("inverse", "1/eps^2", 10)] == ["1/eps", "1/eps^2", "10"]

    @pytest.mark.parametrize("bad", [1, 0, "nonsense", "2.5"])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            JRule.parse(bad)

    def test_resolved_j_at_least_two(self):
        with pytest.raises(ConfigError):
            JRule("inverse").resolve(1.5)


class TestScheme:
    def test_reference_regime(self):
        res = resolve_scheme(WindowScheme(), 0.01)
        assert (res.j, res.n) == (100, 10_000)
        assert res.delta == pytest.approx(0.1)

    def test_bind_snaps_delta(self):
        res = resolve_scheme(WindowScheme(), 0.005).bind(5e-6)
        assert res.delta == pytest.approx(14142 * 5e-6, abs=1e-15)

    def test_bind_rejects_misaligned_sub_step(self):
        with pytest.raises(GridMismatch):
            resolve_scheme(WindowScheme(j_rule=JRule("constant", 3)), 0.01).bind(1e-4)


class TestSeries:
    def test_degenerate_single_observation(self):
        rng = np.random.default_rng(2)
        eps, dt = 0.1, 0.01
        r = np.concatenate([[0.0], rng.standard_normal(10).cumsum()])
        b = bundle_from(r, dt)
        s = realized_series(b, 0, WindowScheme(j_rule=JRule("constant", 5), c_n=eps, delta=eps), eps)
        assert len(s) == 1 and s.ks.tolist() == [1]
        assert s.observations[0] == realized_volatility(r, eps, eps, 5, dt)

    def test_first_window_starts_after_zero(self):
        b = bundle_from(np.zeros(2001), 0.001)
        s = realized_series(b, 0, WindowScheme(c_n=0.8), 0.2)
        assert s.ks[0] == 1 and s.times[0] - 0.2 >= 0
        with pytest.warns(UserWarning, match="overlap"):
            s2 = realized_series(b, 0, WindowScheme(c_n=0.5, delta=0.15), 0.2)
        assert s2.ks[0] == 2 and s2.times[0] - 0.2 >= 0

    def test_horizon_too_short_reports_requirement(self):
        b = bundle_from(np.zeros(101), 0.01)
        with pytest.raises(HorizonTooShort, match="N\\*Delta = 320"):
            realized_series(b, 0, WindowScheme(), 0.1)

    def test_overlap_warns(self):
        b = bundle_from(np.zeros(1001), 0.001)
        with pytest.warns(UserWarning):
            realized_series(b, 0, WindowScheme(c_n=0.2, delta=0.05), 0.1)

    def test_no_warning_in_standard_regime(self):
        b = bundle_from(np.zeros(4001), 0.001)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            realized_series(b, 0, WindowScheme(c_n=0.4), 0.1)

    def test_matches_pointwise_evaluation(self):
        cfg = SimConfig(dt=1e-3, horizon=4.0, n_paths=2, seed=5, path_offset=7, store_v=False)
        b = simulate(REFERENCE_PARAMS, cfg)
        s = realized_series(b, 8, WindowScheme(c_n=0.4), 0.1)
        assert s.path_id == 8
        for k, w in zip(s.ks[:5], s.observations[:5]):
            t = k * s.delta
            assert w == realized_volatility(b.returns[1], t, 0.1, 10, 1e-3)
        assert np.all(s.observations >= 0)

    def test_unknown_path(self):
        with pytest.raises(ValueError):
            realized_series(bundle_from(np.zeros(101), 0.01), 3, WindowScheme(), 0.1)

    def test_csv(self):
        b = bundle_from(np.linspace(0, 1, 1001), 0.001)
        text = realized_series(b, 0, WindowScheme(c_n=0.1), 0.1).to_csv()
        lines = text.splitlines()
        assert lines[0].startswith("# epsilon=") and any(l.startswith("# J=10") for l in lines)
        assert "k,t,W" in lines
