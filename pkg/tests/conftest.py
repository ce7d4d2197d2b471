import numpy as np
import pytest

from aeroduel.vehicle import Vehicle
from aeroduel.dynamics import DynamicsModel
from aeroduel.reference import build_catalog


@pytest.fixture(scope="session")
def vehicle():
    return Vehicle()


@pytest.fixture(scope="session")
def model(vehicle):
    return DynamicsModel(vehicle)


@pytest.fixture(scope="session")
def catalog(model):
    return build_catalog(model)


@pytest.fixture(scope="session")
def climb_path(catalog):
    # The (kappa, gamma) = (0.02, 0.21) lemniscate.
    for path in catalog:
        if path.kappa == 0.02 and path.gamma == 0.21:
            return path
    raise AssertionError("catalog is missing the (0.02, 0.21) path")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
