import math

import numpy as np
import pytest
from scipy import integrate

ACCEPTANCE_LINES: list[str] = []


def rayleigh_expectation(g) -> float:
    """E[g(X)] for X ~ Exp(1), by adaptive quadrature."""
    value, _ = integrate.quad(lambda x: g(x) * math.exp(-x), 0.0, np.inf, epsabs=1e-12, epsrel=1e-12)
    return value


@pytest.fixture(scope="session")
def siso_mi_oracle() -> float:
    return rayleigh_expectation(math.log1p)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
