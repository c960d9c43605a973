import numpy as np
import pytest

from sqzfb import SystemParams


@pytest.fixture
def params():
    """Benchmark configuration: omega = 0.1, chi = 0.49, eta = 0.9, dt = 1e-3."""
    return SystemParams(omega=0.1, chi=0.49, eta=0.9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240815)
