import math

import numpy as np
import pytest
from scipy.integrate import quad

from paraxial_verify.spectral import KGrid, Params


def gaussian_hat(K, sigma=1.0):
    return (sigma**2 / (2 * math.pi)) * math.exp(-0.5 * sigma**2 * K * K)


def radial_l2(f, lo=0.0, hi=math.inf):
    """sqrt of int_{lo<|K|<hi} |f(|K|)|^2 d^2K by adaptive 1D quadrature."""
    val, _ = quad(lambda K: f(K) ** 2 * 2 * math.pi * K, lo, hi, epsabs=0, epsrel=1e-13, limit=200)
    return math.sqrt(val)


@pytest.fixture
def params():
    return Params(omega=1.0, epsilon=0.1, Z0=1.0, s=0, sA=4)


@pytest.fixture
def small_grid():
    return KGrid(k_max=1.2, n=48)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
