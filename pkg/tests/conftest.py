import numpy as np
import pytest

from capnav.scenegen import generate_scene, load_catalog


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def scene42(catalog):
    return generate_scene(42, catalog)


@pytest.fixture(scope="session")
def scenes20(catalog):
    return [generate_scene(seed, catalog) for seed in range(20)]


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
