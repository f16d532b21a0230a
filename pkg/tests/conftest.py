import numpy as np
import pytest

from shadowbench.torus import cat_map, crovisier_product, default_product, golden_map


@pytest.fixture(scope="session")
def cat():
    return cat_map()


@pytest.fixture(scope="session")
def golden():
    return golden_map()


@pytest.fixture(scope="session")
def product():
    return default_product()


@pytest.fixture(scope="session")
def crovisier():
    return crovisier_product()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
