import numpy as np
import pytest

from nelson_kepler.core import params_new

ACCEPTANCE_LINES = []


@pytest.fixture
def p05():
    return params_new(mu=1.0, lam=1.0, e=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
