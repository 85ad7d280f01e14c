import numpy as np
import pytest

from levylab.errors import DomainError, Unsupported
from levylab.stationary import (conditional_independence_check, coupling_epsilon, coupling_exact,
                                crossing_stationarity_check, level_stationarity_check, sample_stationary,
                                spatial_stationarity_check, stationary_ensemble, williams_check)


class TestSampleStationary:
    def test_invariants(self, kou, kou_ladder, kou_rho):
        for s in range(5):
            p = sample_stationary(kou, kou_ladder, kou_rho, 2.0, 2.0, 1e-3, seed=s)
            assert p.check_invariants()
            assert p.value_at(-0.5) < 0 or p.value_at(-0.5) == pytest.approx(0.0)

    def test_brownian_starts_at_zero(self, bm, bm_ladder, bm_rho):
        p = sample_stationary(bm, bm_ladder, bm_rho, 1.0, 1.0, 1e-3, seed=0)
        assert p.crossing_pair == (0.0, 0.0)

    def test_reproducible(self, kou, kou_ladder, kou_rho):
        a = sample_stationary(kou, kou_ladder, kou_rho, 1.0, 1.0, 1e-3, seed=9)
        b = sample_stationary(kou, kou_ladder, kou_rho, 1.0, 1.0, 1e-3, seed=9)
        t = np.linspace(-1, 1, 41)
        np.testing.assert_array_equal(a.value_at(t), b.value_at(t))


@pytest.fixture(scope="module")
def kou_ens(kou, kou_ladder, kou_rho):
    return stationary_ensemble(kou, kou_ladder, kou_rho, 1.0, (-0.5, 0.5), n_paths=20_000, seed=1)


class TestEnsembles:
    def test_crossing_reproduces_rho(self, kou_ens, kou_rho):
        rep = crossing_stationarity_check(kou_ens, kou_rho, tol=0.03)
        assert rep.passed

    def test_brownian_degenerate(self, bm, bm_ladder, bm_rho):
        ens = stationary_ensemble(bm, bm_ladder, bm_rho, 1.0, (0.5,), n_paths=2000, seed=2)
        rep = crossing_stationarity_check(ens, bm_rho)
        assert rep.passed and "degenerate" in rep.flags

    def test_independence(self, kou_ens):
        assert conditional_independence_check(kou_ens, probe_time=-0.5).passed

    def test_level_stationarity(self, kou, kou_ladder, kou_rho, kou_ens):
        other = stationary_ensemble(kou, kou_ladder, kou_rho, 2.0, (-0.5, 0.5), n_paths=20_000, seed=3)
        assert level_stationarity_check(kou_ens, other).passed

    def test_probe_lookup(self, kou_ens):
        assert kou_ens.probe(0.5).shape == (kou_ens.n,)
        with pytest.raises(KeyError):
            kou_ens.probe(0.25)

    def test_jsonl(self, kou_ens, tmp_path):
        p = tmp_path / "ens.jsonl"
        kou_ens.to_jsonl(p)
        assert len(p.read_text().splitlines()) == kou_ens.n + 1


class TestSmallChecks:
    def test_spatial_kou(self, kou, kou_ladder, kou_rho):
        rep = spatial_stationarity_check(kou, kou_ladder, kou_rho, 1.0, n_paths=20_000, seed=4, tol=0.05)
        assert rep.passed

    def test_williams_needs_brownian(self, kou):
        with pytest.raises((Unsupported, DomainError)):
            williams_check(kou, n_paths=100)

    def test_coupling_epsilon(self, kou, kou_rho):
        rep = coupling_epsilon(kou, kou_rho, n_runs=2000, seed=5, ks_tol=0.05)
        assert rep["gap_in_range"].value
        assert rep.passed

    def test_coupling_exact_brownian_one_round(self, bm, bm_rho):
        rep = coupling_exact(bm, bm_rho, n_runs=2000, seed=6)
        assert rep["rounds_all_one"].value
