import numpy as np
import pytest
from hypothesis import settings

from ageinvariance.config import DEFAULT_INI, parse_config
from ageinvariance.lp_grid import AgeGrid, GridFunction
from ageinvariance.model import ModelParams, constant_on_support

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def default_run():
    return parse_config(DEFAULT_INI)


@pytest.fixture(scope="session")
def grid():
    return AgeGrid.from_horizon(10.0, 0.01, 2.0)


@pytest.fixture(scope="session")
def params(grid):
    return ModelParams(grid, 1.0, constant_on_support(grid, 1.5, 2.0), 0.5, 2.0)


@pytest.fixture(scope="session")
def x0(default_run):
    return default_run.x0


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def bump(grid, amp, center=2.5, half=1.5):
    a = grid.midpoints
    return GridFunction(grid, amp * np.cos(0.5 * np.pi * np.clip((a - center) / half, -1, 1)) ** 2)
