import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from levylab.errors import EmptySample
from levylab.experiments import ks_null_rejection_rate
from levylab.stats import (dcor_permutation_test, effective_sample_size, ks_distance, log_survival_fit,
                           mean_and_se, w1_distance)


class TestKS:
    def test_identical(self):
        a = np.arange(50.0)
        assert ks_distance(a, a).statistic == 0.0

    def test_disjoint(self):
        assert ks_distance(np.zeros(5), np.ones(7)).statistic == 1.0

    def test_empty(self):
        with pytest.raises(EmptySample):
            ks_distance(np.array([]), np.ones(3))

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_scipy(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.normal(size=300), r.normal(0.2, 1, size=400)
        ref = stats.ks_2samp(a, b)
        res = ks_distance(a, b)
        assert res.statistic == pytest.approx(ref.statistic, abs=1e-12)

    def test_one_sample_normal(self):
        # statistic below 1.36/sqrt(n) in about 95% of seeds
        n = 100_000
        hits = sum(ks_distance(np.random.default_rng(s).normal(size=n), cdf=stats.norm.cdf).statistic
                   < 1.36 / math.sqrt(n) for s in range(40))
        assert hits >= 33

    def test_weighted_equals_repetition(self):
        a = np.array([0.0, 1.0, 2.0])
        w = np.array([1.0, 2.0, 1.0])
        b = np.array([0.0, 1.0, 1.0, 2.0])
        assert ks_distance(a, b, weights_a=w).statistic == pytest.approx(0.0, abs=1e-12)

    def test_null_rejection_rate_small(self):
        rate = ks_null_rejection_rate(reps=300, sample_size=200, seed=1)
        assert 0.01 <= rate <= 0.10


class TestW1:
    def test_identical(self):
        a = np.random.default_rng(0).normal(size=100)
        assert w1_distance(a, a) == 0.0

    @given(st.floats(-5, 5))
    def test_point_masses(self, c):
        assert w1_distance(np.zeros(4), np.full(4, c)) == pytest.approx(abs(c), abs=1e-12)

    def test_uniform_shift(self):
        r = np.random.default_rng(3)
        assert w1_distance(r.uniform(size=10_000), r.uniform(size=10_000) + 0.5) == pytest.approx(0.5, abs=0.01)

    @settings(max_examples=30)
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.floats(-10, 10))
    def test_translation(self, xs, c):
        a = np.array(xs)
        assert w1_distance(a, a + c) == pytest.approx(abs(c), abs=1e-9)


class TestHelpers:
    def test_ess_uniform(self):
        assert effective_sample_size(np.ones(50)) == pytest.approx(50)

    def test_mean_and_se(self):
        m, se = mean_and_se(np.array([1.0, 2.0, 3.0]))
        assert m == 2.0 and se == pytest.approx(1 / math.sqrt(3))

    def test_geometric_log_survival(self):
        counts = np.random.default_rng(0).geometric(0.4, size=50_000)
        slope, r2, levels = log_survival_fit(counts)
        assert r2 > 0.99
        assert slope == pytest.approx(math.log(0.6), rel=0.05)

    def test_dcor_independent(self):
        r = np.random.default_rng(4)
        res = dcor_permutation_test(r.normal(size=200), r.normal(size=200), n_perm=99, seed=1)
        p = res[1] if isinstance(res, tuple) else res.pvalue
        assert p > 0.01
