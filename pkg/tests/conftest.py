"""
Shared fixtures for the AH toolkit tests
"""

import os
import sys
import tempfile

import numpy as np
import pytest

# Keep test runs from writing into the project log
os.environ.setdefault("AHMASS_LOG_FILE", os.path.join(tempfile.gettempdir(), "ahmass-tests.log"))

# Add the project root to the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from src.sphere_calculus import make_grid


@pytest.fixture
def coarse_grid():
    return make_grid(12, 24)


@pytest.fixture
def grid():
    return make_grid(24, 48)


@pytest.fixture
def acceptance_grid():
    return make_grid(config.ACCEPTANCE_N_THETA, config.ACCEPTANCE_N_PHI)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def loglog_slope():
    """Least-squares slope of log(errors) against log(radii)"""
    def slope(radii, errors):
        return float(np.polyfit(np.log(np.asarray(radii)), np.log(np.asarray(errors)), 1)[0])
    return slope


def random_rotation(rng) -> np.ndarray:
    """Uniform SO(3) matrix"""
    Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


@pytest.fixture
def rotation(rng):
    return random_rotation(rng)
