import numpy as np
import pytest

from mixloc import Domain, build_grid, boundary_quadrature
from mixloc.fracops import assemble_fractional, assemble_laplacian, assemble_mixed
from mixloc.solvers import GridFunction


@pytest.fixture(scope="session")
def interval_grid_1024():
    return build_grid(Domain("interval", 1.0), 1024)


@pytest.fixture(scope="session")
def interval_grid_2048():
    return build_grid(Domain("interval", 1.0), 2048)


@pytest.fixture(scope="session")
def frac_half_2048(interval_grid_2048):
    return assemble_fractional(interval_grid_2048, 0.5)


@pytest.fixture(scope="session")
def lap_2048(interval_grid_2048):
    return assemble_laplacian(interval_grid_2048)


@pytest.fixture(scope="session")
def disk_grid_64():
    return build_grid(Domain("disk2d", 1.0), 64)


def parabola(grid, power=1.0):
    R = grid.domain.radius
    return GridFunction(grid, np.maximum(1.0 - (grid.radii / R) ** 2, 0.0) ** power)
