import numpy as np
import pytest

from glassbox.measure import GaussianMeasure, sample


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def gauss_half():
    return GaussianMeasure.bivariate(0.5)


@pytest.fixture(scope="session")
def gauss_sample():
    return sample(GaussianMeasure.bivariate(0.5), 4000, seed=7)


ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance_log():
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
