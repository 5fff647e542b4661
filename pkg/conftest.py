import math

import numpy as np
import pytest

from littlewood_paley import build_partition
from spectral_core import make_grid, transform, truncate


@pytest.fixture
def grid():
    return make_grid(2, 16)


@pytest.fixture
def grid32():
    return make_grid(2, 32)


@pytest.fixture
def partition(grid):
    return build_partition(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sin_x(grid):
    x, _ = grid.coordinates()
    return transform(grid, np.sin(x))


def random_field(grid, rng, components=1, mean_zero=True):
    """Random dealiased field; mean removed unless asked otherwise."""
    f = truncate(transform(grid, rng.standard_normal((components,) + grid.shape)))
    return f.without_mean() if mean_zero else f


SQRT2_PI = math.pi * math.sqrt(2.0)
