import math

import numpy as np
import pytest

from dmt.model import polynomial_spectrum

M, EPS, ALPHA, BETA = 50, 0.1, 0.05, 0.05
N_DESK = 20000


def binomial_se(p, n):
    return math.sqrt(p * (1 - p) / n)


@pytest.fixture
def base_spectrum():
    return polynomial_spectrum(M, 0.5)


@pytest.fixture
def homogeneous_pair(base_spectrum):
    """Two scaled copies of one spectrum at theta0 = 0."""
    return [base_spectrum.values, 0.9 * base_spectrum.values], np.zeros(M)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
