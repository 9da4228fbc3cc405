import numpy as np
import pytest

from cauchyop.grid import TGrid, TorusGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid1():
    return TorusGrid(n=1, m=1, N=32, L=2 * np.pi)


@pytest.fixture
def grid2():
    return TorusGrid(n=2, m=1, N=8, L=2 * np.pi)


@pytest.fixture
def tgrid():
    return TGrid(1e-3, 20.0, 60)


def random_values(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)
