import numpy as np
import pytest
from hypothesis import settings

from hypdens.geometry import build_grid, collar_annulus, disk_domain
from hypdens.metric import solve_liouville

settings.register_profile("desk", max_examples=25, deadline=None)
settings.load_profile("desk")


@pytest.fixture(scope="session")
def disk64():
    return solve_liouville(build_grid(disk_domain(), 1 / 64))


@pytest.fixture(scope="session")
def disk128():
    return solve_liouville(build_grid(disk_domain(), 1 / 128))


@pytest.fixture(scope="session")
def annulus2():
    """e^-2 < |z| < e^2 with 128 cells per outer radius."""
    return solve_liouville(build_grid(collar_annulus(2.0), np.exp(2.0) / 128))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20261016)
