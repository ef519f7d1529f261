import math

import numpy as np
import pytest

from chflow.spectral import RealField, make_grid

TWO_PI = 2 * math.pi


@pytest.fixture
def grid8():
    return make_grid(8, TWO_PI)


@pytest.fixture
def grid16():
    return make_grid(16, TWO_PI)


def random_real(grid, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return RealField(grid, scale * rng.standard_normal(grid.shape))


def cosine(grid, k, a=1.0, mean=0.0):
    x1, x2, x3 = grid.coords
    u = mean + a * np.cos(grid.unit * (k[0] * x1 + k[1] * x2 + k[2] * x3))
    return RealField(grid, np.broadcast_to(u, grid.shape).copy())


def constant(grid, c):
    return RealField(grid, np.full(grid.shape, float(c)))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
