"""
Shared fixtures: small grids, reference cones and fast run configs
"""

import numpy as np
import pytest

from lagflow.core.cone import ConeSpec
from lagflow.core.config import RunConfig
from lagflow.core.grid import Grid
from lagflow.services.kernels import SymMatrix
from lagflow.utils.logging import setup_logging


@pytest.fixture(autouse=True, scope="session")
def quiet_logging():
    setup_logging("WARNING", "json")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def grid():
    # h = 0.25: quadratic stencils are exact to roundoff well below 1e-12
    return Grid(dim=2, radius=4.0, points_per_axis=33)


@pytest.fixture
def diag_hessian():
    return SymMatrix.diag([0.5, 0.3])


@pytest.fixture
def quadratic_cone(diag_hessian):
    return ConeSpec.quadratic(diag_hessian)


@pytest.fixture
def two_sector_cone():
    return ConeSpec.two_sector(0.5, 0.3)


@pytest.fixture
def fast_config():
    return RunConfig(t_end=0.25, s_end=1.0, snapshot_stride=5)


def random_symmetric(rng, n, radius):
    """Random symmetric matrix with spectral radius exactly `radius`"""
    m = rng.standard_normal((n, n))
    a = 0.5 * (m + m.T)
    return a * (radius / np.max(np.abs(np.linalg.eigvalsh(a))))
