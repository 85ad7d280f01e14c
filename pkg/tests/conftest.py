import numpy as np
import pytest

from levylab import closed_form_ladder, make_model
from levylab.fluctuation import build_rho

KOU_PARAMS = {"family": "KouTwoSidedExp", "sigma": 1.0, "drift": 0.0, "rate": 1.0, "p": 0.5,
              "alpha_plus": 2.0, "alpha_minus": 2.0}


@pytest.fixture(scope="session")
def bm():
    return make_model("BrownianStandard")


@pytest.fixture(scope="session")
def kou():
    return make_model(KOU_PARAMS)


@pytest.fixture(scope="session")
def snexp():
    return make_model({"family": "SpectrallyNegativeExp", "sigma": 1.0, "drift": 0.5, "rate": 1.0, "alpha": 2.0})


@pytest.fixture(scope="session")
def bm_ladder(bm):
    return closed_form_ladder(bm)


@pytest.fixture(scope="session")
def kou_ladder(kou):
    return closed_form_ladder(kou)


@pytest.fixture(scope="session")
def bm_rho(bm, bm_ladder):
    return build_rho(bm, bm_ladder)


@pytest.fixture(scope="session")
def kou_rho(kou, kou_ladder):
    return build_rho(kou, kou_ladder)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
