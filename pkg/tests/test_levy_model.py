import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levylab import (Family, LadderClass, classify_ladder_mean, closed_form_ladder, levy_tail, make_model,
                     mean_increment, negate)
from levylab.errors import RejectCompoundPoisson, RejectParam, Unsupported
from levylab.levy_model import wiener_hopf

# Independent factorization of the symmetric Kou exponent (sigma=1, rate=1, p=1/2, alpha=2):
# psi(t) = t^2 (6 - t^2) / (2 (4 - t^2)), kappa(t) = t (t + sqrt6) / (sqrt2 (t + 2)).
KOU_EH = 0.8660254037844385
KOU_A_PLUS = 0.7071067811865475
KOU_SLOPE = 1.1547005383792517
KOU_BUMP = 0.10594574839859404
KOU_ROOT = 2.449489742783178


class TestConstruction:
    def test_brownian_standard(self, bm):
        assert (bm.sigma, bm.drift, bm.jumps) == (1.0, 0.0, None)
        assert bm.family_tag == Family.BROWNIAN_STANDARD

    def test_compound_poisson_rejected(self):
        with pytest.raises(RejectCompoundPoisson):
            make_model({"family": "Custom", "sigma": 0.0, "drift": 0.0,
                        "jumps": {"rate": 1.0, "components": [{"weight": 1.0, "rate": 1.0, "sign": 1}]}})

    def test_kou_template(self, kou):
        assert kou.jump_rate == 1.0
        assert mean_increment(kou) == pytest.approx(0.0, abs=1e-14)
        assert kou.has_positive_jumps and kou.has_negative_jumps

    @pytest.mark.parametrize("bad", [{"rate": -1.0}, {"p": 1.5}, {"alpha_plus": 0.0}, {"sigma": -1.0}])
    def test_kou_bad_params(self, bad):
        with pytest.raises(RejectParam):
            make_model({"family": "KouTwoSidedExp", **bad})

    def test_unknown_family(self):
        with pytest.raises(RejectParam):
            make_model("Stable")

    def test_round_trip(self, kou):
        assert make_model(kou.to_dict()) == kou


class TestNegate:
    def test_brownian_fixed(self, bm):
        assert negate(bm) == bm

    def test_kou_symmetric_fixed(self, kou):
        assert negate(kou).to_dict() == kou.to_dict()

    def test_spectrally_negative_reflects(self, snexp):
        dual = negate(snexp)
        assert dual.drift == -snexp.drift
        assert dual.has_positive_jumps and not dual.has_negative_jumps

    def test_involution(self, snexp):
        twice = negate(negate(snexp))
        assert twice.drift == snexp.drift
        assert twice.down_masses() == snexp.down_masses()


class TestTailsAndMeans:
    @pytest.mark.parametrize("x", [0.1, 1.0, 4.0])
    def test_bm_tail_zero(self, bm, x):
        assert levy_tail(bm, x) == 0.0

    def test_kou_tail(self, kou):
        assert levy_tail(kou, 1.0) == pytest.approx(0.5 * math.exp(-2.0), rel=1e-12)

    def test_spectrally_negative_tail(self, snexp):
        assert np.all(levy_tail(snexp, np.array([0.5, 2.0])) == 0.0)

    @pytest.mark.parametrize("b", [1.0, -0.5, 0.0])
    def test_drift_mean(self, b):
        assert mean_increment(make_model("BrownianDrift", drift=b)) == pytest.approx(b)

    @given(st.floats(0.05, 20.0))
    def test_kou_tail_monotone(self, x):
        kou = make_model({"family": "KouTwoSidedExp"})
        assert levy_tail(kou, x) >= levy_tail(kou, x * 1.1)


class TestClassification:
    @pytest.mark.parametrize("spec, expected", [
        ({"family": "BrownianDrift", "drift": 1.0}, LadderClass.FINITE),
        ({"family": "BrownianDrift", "drift": -1.0}, LadderClass.INFINITE),
        ({"family": "KouTwoSidedExp"}, LadderClass.FINITE),
        ({"family": "BrownianStandard"}, LadderClass.FINITE),
    ])
    def test_classes(self, spec, expected):
        assert classify_ladder_mean(make_model(spec)) == expected


class TestClosedForm:
    def test_brownian(self, bm_ladder):
        r2 = math.sqrt(2)
        assert bm_ladder.a_plus == pytest.approx(1 / r2)
        assert bm_ladder.a_minus == pytest.approx(1 / r2)
        assert bm_ladder.EH == pytest.approx(1 / r2)
        x = np.linspace(0, 3, 13)
        np.testing.assert_allclose(bm_ladder.U_plus(x), r2 * x, atol=1e-12)
        np.testing.assert_allclose(bm_ladder.U_minus(x), r2 * x, atol=1e-12)
        np.testing.assert_allclose(bm_ladder.u_plus(x), r2, atol=1e-12)

    def test_kou_against_factorization(self, kou_ladder):
        x = np.linspace(0, 4, 17)
        expected = KOU_SLOPE * x + KOU_BUMP * (1 - np.exp(-KOU_ROOT * x))
        np.testing.assert_allclose(kou_ladder.U_plus(x), expected, atol=1e-10)
        np.testing.assert_allclose(kou_ladder.U_minus(x), expected, atol=1e-10)
        assert kou_ladder.EH == pytest.approx(KOU_EH, rel=1e-10)
        assert kou_ladder.a_plus == pytest.approx(KOU_A_PLUS, rel=1e-10)

    def test_wiener_hopf_roots(self, kou):
        wh = wiener_hopf(kou)
        assert sorted(wh.plus_roots) == pytest.approx([0.0, KOU_ROOT], abs=1e-10)

    def test_custom_unsupported(self):
        m = make_model({"family": "Custom", "sigma": 1.0, "drift": 0.0})
        with pytest.raises(Unsupported):
            closed_form_ladder(m)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.2, 3.0), st.floats(0.5, 5.0))
    def test_kou_factorization_product(self, sigma, alpha):
        # kappa_plus(l) kappa_minus(-l) reproduces -psi(l) inside the strip
        m = make_model({"family": "KouTwoSidedExp", "sigma": sigma, "alpha_plus": alpha, "alpha_minus": alpha})
        wh = wiener_hopf(m)
        lam = 0.3 * min(alpha, 1.0)
        lhs = wh.kappa_plus(-lam) * wh.kappa_minus(lam)
        assert lhs == pytest.approx(-float(m.laplace_exponent(lam)), rel=1e-6, abs=1e-10)
