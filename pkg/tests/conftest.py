import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tomfield import dataset as dsmod
from tomfield import envs

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def tiny_highway_dataset():
    return dsmod.generate_dataset(envs.highway_config(), 12, seed=3, T=14)


@pytest.fixture(scope="session")
def tiny_obstacle_dataset():
    return dsmod.generate_dataset(envs.obstacle_config(), 10, seed=4, T=20)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
