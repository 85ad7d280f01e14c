import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from levylab import make_model
from levylab.errors import CoverageExceeded, DomainError, TailUnbounded, Unsupported
from levylab.lamperti import (DEFAULT_CLOCK, ClockSpec, backward_tail_coef, clock_table, entrance_sample,
                              exp_functional, expected_clock_at_zero, inverse_clock, pssmp_from_positive,
                              time_change)
from levylab.selftest import line
from levylab.stationary import TwoSidedPath, sample_stationary
from levylab.stats import ks_distance

# frozen: (1/EH) int e^{-y} U(y) dy and its U^2 / slope analogue for the symmetric Kou factorization
KOU_CLOCK_MEAN = 1.420204102886729
KOU_TAIL_COEF = 2.897394890187586


def deterministic(forward_slope=0.0, back=40.0, fwd=5.0):
    return TwoSidedPath(line(0.0, 1.0, back), line(0.0, forward_slope, fwd), (0.0, 0.0))


class TestClockSpec:
    def test_default(self):
        assert DEFAULT_CLOCK.index == 1.0

    def test_bad_index(self):
        with pytest.raises(DomainError):
            ClockSpec.exponential(0.0)

    def test_integrability(self):
        assert ClockSpec.exponential(2.0).integrability()["finite"]

    def test_nonmonotone_state_map(self):
        with pytest.raises(DomainError):
            ClockSpec(np.exp, np.cos, None).validate([0.0, 1.0, 2.0, 4.0])


class TestSinglePath:
    def test_clock_at_zero_is_one(self):
        assert exp_functional(deterministic(), 0.0).value == pytest.approx(1.0, abs=1e-6)

    def test_constant_forward(self):
        tc = time_change(deterministic(), DEFAULT_CLOCK, [1.2, 2.0, 5.5])
        np.testing.assert_allclose(tc.values, 1.0, atol=1e-12)

    @pytest.mark.parametrize("t", [0.5, 1.0, 3.0])
    def test_additive(self, t):
        p = deterministic(0.3)
        a = exp_functional(p, t).value
        b = exp_functional(p, t / 2).value
        table = clock_table(p)
        seg = table.clock_at(t, np.exp) - table.clock_at(t / 2, np.exp)
        assert a - b == pytest.approx(seg, abs=1e-9)

    def test_inverse_pair(self):
        p = deterministic(0.5)
        s = np.array([-2.0, 0.0, 1.0, 2.5])
        table = clock_table(p)
        u = table.clock_at(s, np.exp)
        np.testing.assert_allclose(inverse_clock(p, u), s, atol=1e-9)

    def test_strictly_increasing(self, kou, kou_ladder, kou_rho):
        p = sample_stationary(kou, kou_ladder, kou_rho, 60.0, 3.0, 1e-3, seed=1)
        table = clock_table(p, tail_tol=1.0)
        assert np.all(np.diff(table.clock) >= 0)

    def test_index_two(self):
        # xi_s = s for s < 0 with f = exp(2y): I(0) = 1/2
        val = exp_functional(deterministic(), 0.0, ClockSpec.exponential(2.0)).value
        assert val == pytest.approx(0.5, abs=1e-6)

    def test_short_backward_rejected(self):
        with pytest.raises(TailUnbounded):
            exp_functional(deterministic(back=1.0), 0.0)

    def test_coverage(self):
        with pytest.raises(CoverageExceeded):
            time_change(deterministic(fwd=0.5), DEFAULT_CLOCK, [10.0])


class TestPositiveStart:
    @pytest.mark.parametrize("x", [0.5, 1.0, 3.0])
    def test_drift_is_linear(self, x):
        m = make_model({"family": "Custom", "sigma": 0.0, "drift": 1.0})
        grid = np.array([0.1, 0.7, 2.0])
        s = pssmp_from_positive(m, x, grid, dt=1e-4, seed=0)
        np.testing.assert_allclose(s.values[0], x + grid, rtol=1e-8)

    def test_brownian_squared_bessel(self, bm):
        # 4 X_t is a squared Bessel process of dimension 2 started at 4x
        s = pssmp_from_positive(bm, 1.0, [1.0], n_paths=5000, seed=3)
        v = 4 * s.marginal(1.0)
        assert ks_distance(v, cdf=lambda y: stats.ncx2.cdf(y, 2, 4.0)).statistic < 0.03
        assert np.all(v > 0)

    def test_general_clock_needs_index(self, bm):
        with pytest.raises(Unsupported):
            pssmp_from_positive(bm, 1.0, [1.0], clock=ClockSpec(np.exp, np.exp, None))

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000))
    def test_seed_determinism(self, seed):
        bm = make_model("BrownianStandard")
        a = pssmp_from_positive(bm, 1.0, [0.5, 1.0], n_paths=20, seed=seed)
        b = pssmp_from_positive(bm, 1.0, [0.5, 1.0], n_paths=20, seed=seed)
        np.testing.assert_array_equal(a.values, b.values)


class TestConstants:
    def test_brownian(self, bm_ladder):
        assert expected_clock_at_zero(bm_ladder) == pytest.approx(2.0, rel=1e-9)
        assert backward_tail_coef(bm_ladder) == pytest.approx(4.0, rel=1e-9)

    def test_kou(self, kou_ladder):
        assert expected_clock_at_zero(kou_ladder) == pytest.approx(KOU_CLOCK_MEAN, rel=1e-7)
        assert backward_tail_coef(kou_ladder) == pytest.approx(KOU_TAIL_COEF, rel=1e-7)


@pytest.fixture(scope="module")
def sample(bm, bm_ladder, bm_rho):
    return entrance_sample(bm, bm_ladder, bm_rho, [0.5, 1.0], n_paths=4000, seed=2)


class TestEntrance:
    def test_clock_mean(self, sample):
        i0 = sample.clock_at_zero[np.isfinite(sample.clock_at_zero)]
        se = i0.std() / math.sqrt(i0.size)
        assert abs(i0.mean() - 2.0) < 4 * se

    def test_exponential_marginal(self, sample):
        # from 0+, X_1 is exponential with mean 1/2
        v = sample.marginal(1.0)
        assert ks_distance(v, cdf=lambda y: stats.expon.cdf(y, scale=0.5)).statistic < 0.035

    def test_csv(self, sample, tmp_path):
        p = tmp_path / "x.csv"
        sample.to_csv(p)
        lines = p.read_text().splitlines()
        assert lines[0] == "t,X_t,replica,censored"
        assert len(lines) == 1 + 2 * sample.n

    def test_off_grid(self, sample):
        with pytest.raises(DomainError):
            sample.marginal(0.75)

    def test_kou_backward_mean(self, kou, kou_ladder, kou_rho):
        s = entrance_sample(kou, kou_ladder, kou_rho, [1.0], n_paths=4000, seed=5)
        i0 = s.clock_at_zero[np.isfinite(s.clock_at_zero)]
        assert abs(i0.mean() - KOU_CLOCK_MEAN) < 4 * i0.std() / math.sqrt(i0.size)
