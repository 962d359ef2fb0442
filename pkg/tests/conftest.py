import numpy as np
import pytest

from aqbell import aq_extremize, make_scenario
from aqbell.nbf import reference_composed_functional, reference_family, reference_functionals


@pytest.fixture(scope="session")
def scn222():
    return make_scenario(2, 2, 2)


@pytest.fixture(scope="session")
def scn232():
    return make_scenario(2, 3, 2)


@pytest.fixture(scope="session")
def scn332():
    return make_scenario(3, 3, 2)


@pytest.fixture(scope="session")
def reference_trio():
    return reference_functionals()


@pytest.fixture(scope="session")
def ref_family():
    return reference_family()


@pytest.fixture(scope="session")
def composed_w():
    return reference_composed_functional()


@pytest.fixture(scope="session")
def headline(composed_w):
    """Shared minimum of the composed functional over the tripartite set."""
    return aq_extremize(composed_w, "min")


def random_mixture(scenario, rng):
    from aqbell.scenario import random_local_behavior

    return random_local_behavior(scenario, rng)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
