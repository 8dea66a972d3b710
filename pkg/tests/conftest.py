import numpy as np
import pytest
from hypothesis import settings

from phononbs.config import default_device
from phononbs.core import TWO_PI

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

KHZ = TWO_PI * 1e-3


@pytest.fixture(scope="session")
def device():
    return default_device()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line for the acceptance summary."""
    def add(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
