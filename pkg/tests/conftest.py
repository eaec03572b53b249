import numpy as np
import pytest

from flrn.funcspace import Dataset, make_uniform_grid
from flrn.kernels import KernelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sobolev():
    return KernelSpec()


def random_smooth_curves(rng, n, grid, modes=6):
    """Random low-frequency curves on ``grid``."""
    k = np.arange(1, modes + 1)
    coef = rng.standard_normal((n, modes)) / k
    phase = rng.uniform(0, np.pi, (n, modes))
    t = grid.points
    return np.einsum("nk,nkg->ng", coef, np.cos(np.pi * k[None, :, None] * t[None, None, :] + phase[:, :, None]))


@pytest.fixture
def small_data(rng):
    grid = make_uniform_grid(33)
    X = random_smooth_curves(rng, 12, grid)
    return Dataset(X, rng.standard_normal(12), grid)
