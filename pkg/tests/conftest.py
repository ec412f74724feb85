import numpy as np
import pytest

from collapse_audit.advisory import make_catalog
from collapse_audit.sampling import default_plan, generate_profiles


@pytest.fixture(scope="session")
def catalog():
    return make_catalog()


@pytest.fixture(scope="session")
def plan():
    return default_plan()


@pytest.fixture(scope="session")
def profiles(plan):
    return generate_profiles(plan).profiles


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
