import math

import numpy as np
import pytest
from scipy import stats

from levylab import closed_form_ladder, estimate_ladder, make_model
from levylab.errors import RefusesInfiniteMean
from levylab.fluctuation import (build_rho, continuous_crossing_prob, entrance_pairs, exp_fit_r2, green_density,
                                  green_duality_check, mass_of_m, overshoot_limit_check, potential_identity_check,
                                  sample_conditioned, silverstein_check, vigon_tail)
from levylab.stats import ks_distance

# frozen from the explicit symmetric-Kou factorization (see test_levy_model)
KOU_EH = 0.8660254037844385
KOU_ATOM = 0.8164965809277261


def bessel3_cdf(x0, t):
    """Transition cdf of the 3-dimensional Bessel process from ``x0`` at time ``t``."""
    def dens(y):
        return (y / x0) / math.sqrt(2 * math.pi * t) * (math.exp(-(y - x0) ** 2 / (2 * t))
                                                         - math.exp(-(y + x0) ** 2 / (2 * t)))
    grid = np.linspace(0, x0 + 10 * math.sqrt(t), 4001)
    pdf = np.array([dens(y) for y in grid])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
    return lambda y: np.interp(y, grid, cum / cum[-1])


class TestGreenConvolution:
    @pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
    def test_brownian_is_two_min(self, bm_ladder, x):
        y = np.linspace(0.05, 3.0, 40)
        np.testing.assert_allclose(green_density(bm_ladder, x, y), 2 * np.minimum(x, y), atol=1e-10)

    def test_lemma_product(self, bm_ladder):
        y = np.linspace(0.01, 5, 50)
        np.testing.assert_allclose(bm_ladder.U_minus(y) * bm_ladder.u_plus(y), 2 * y, rtol=1e-10)


class TestRho:
    def test_brownian_point_mass(self, bm_rho):
        assert bm_rho.atom_mass == pytest.approx(1.0, abs=1e-12)
        assert not bm_rho.has_density

    def test_kou_atom(self, kou_rho):
        assert kou_rho.atom_mass == pytest.approx(KOU_ATOM, rel=1e-9)
        assert kou_rho.total_mass == pytest.approx(1.0, abs=1e-6)

    def test_spectrally_negative_point_mass(self, snexp):
        rho = build_rho(snexp, closed_form_ladder(snexp))
        assert rho.atom_mass == pytest.approx(1.0, abs=1e-9)

    def test_kou_overshoot_memoryless(self, kou_rho):
        x, y = kou_rho.sample(50_000, np.random.default_rng(0))
        pos = y[y > 0]
        assert stats.kstest(pos, "expon", args=(0, 0.5)).statistic < 0.015

    def test_sampler_matches_marginals(self, kou_rho):
        x, y = kou_rho.sample(40_000, np.random.default_rng(1))
        from levylab.fluctuation import RhoLaw
        for v, cdf in ((x, kou_rho.rho1_cdf), (y, kou_rho.rho2_cdf)):
            assert ks_distance(v, cdf=cdf, cdf_left=RhoLaw.left_limit(cdf)).statistic < 0.015

    def test_json_round_trip(self, kou_rho):
        from levylab.fluctuation import RhoLaw
        back = RhoLaw.from_dict(kou_rho.to_dict())
        assert back.atom_mass == kou_rho.atom_mass


class TestDualityMass:
    def test_brownian(self, bm, bm_ladder):
        assert mass_of_m(bm, bm_ladder) == pytest.approx(1 / math.sqrt(2), rel=1e-12)

    def test_kou(self, kou, kou_ladder):
        assert mass_of_m(kou, kou_ladder) == pytest.approx(KOU_EH, rel=1e-6)

    def test_kou_vigon_tail_exponential(self, kou, kou_ladder):
        y = np.linspace(0, 3, 31)
        tail = vigon_tail(kou, kou_ladder, y)
        rate, r2 = exp_fit_r2(y, tail)
        assert r2 > 0.99 and rate == pytest.approx(2.0)
        np.testing.assert_allclose(tail / tail[0], np.exp(-2 * y), rtol=1e-10)

    def test_spectrally_negative_no_tail(self, snexp):
        lad = closed_form_ladder(snexp)
        assert np.all(lad.mu_plus_tail(np.linspace(0, 2, 5)) == 0.0)


class TestEstimateLadder:
    def test_brownian_slope(self):
        bm = make_model("BrownianStandard")
        est = estimate_ladder(bm, n_paths=20_000, seed=3)
        x = np.linspace(0.5, 3, 11)
        np.testing.assert_allclose(est.U_plus(x) / x, math.sqrt(2), rtol=0.06)
        assert est.meta["mass_m_residual"] < 0.05

    def test_refuses_drift_down(self):
        with pytest.raises(RefusesInfiniteMean):
            estimate_ladder(make_model("BrownianDrift", drift=-1.0), n_paths=1000)


class TestCrossing:
    @pytest.mark.parametrize("x", [0.5, 2.0])
    def test_brownian_always_continuous(self, bm, bm_ladder, x):
        est = continuous_crossing_prob(bm, bm_ladder, x, n_paths=2000, seed=1)
        assert est.estimate == 1.0
        assert est.analytic == pytest.approx(1.0)

    def test_kou_large_x(self, kou, kou_ladder):
        est = continuous_crossing_prob(kou, kou_ladder, 8.0, n_paths=40_000, seed=2)
        assert abs(est.estimate - est.limit) < 3 * est.stderr

    def test_brownian_pairs_zero(self, bm):
        u, o, und = entrance_pairs(bm, 1.0, 2000, seed=4)
        assert np.all(u == 0) and np.all(o == 0)

    def test_spectrally_negative_overshoot(self, snexp):
        rho = build_rho(snexp, closed_form_ladder(snexp))
        rep = overshoot_limit_check(snexp, rho, n_paths=2000, seed=1)
        assert rep["overshoot_all_zero"].value


class TestConditioned:
    def test_from_zero_maxwell(self, bm, bm_ladder):
        ens = sample_conditioned(bm, bm_ladder, 0.0, 1.0, 1e-3, 20_000, 0, probes=[1.0])
        v, _ = ens.marginal(0)
        assert ks_distance(v, cdf=stats.maxwell.cdf).statistic < 0.02

    def test_from_one_bessel(self, bm, bm_ladder):
        ens = sample_conditioned(bm, bm_ladder, 1.0, 1.0, 1e-3, 20_000, 0, probes=[1.0])
        v, _ = ens.marginal(0)
        assert ks_distance(v, cdf=bessel3_cdf(1.0, 1.0)).statistic < 0.02

    def test_weighted_support_positive(self, snexp):
        lad = closed_form_ladder(snexp)
        ens = sample_conditioned(snexp, lad, 1.0, 1.0, 1e-3, 2000, 0, probes=[0.5, 1.0], method="weighted")
        assert np.all(ens.values[ens.weights > 0] > 0)


class TestChecksSmall:
    def test_silverstein_brownian(self, bm, bm_ladder):
        rep = silverstein_check(bm, bm_ladder, n_paths=20_000, seed=1, tol=0.12)
        assert rep.passed

    def test_potential_analytic(self, bm, bm_ladder, bm_rho):
        rep = potential_identity_check(bm, bm_ladder, bm_rho, n_paths=20_000, seed=2, tol=0.12)
        assert rep["lemma_analytic_residual"].value < 1e-10
        assert rep.passed

    def test_duality_brownian(self, bm, bm_ladder):
        rep = green_duality_check(bm, bm_ladder, n_paths=100_000, seed=3, tol=0.25)
        assert rep.passed
