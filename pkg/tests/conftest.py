import numpy as np
import pytest

from gneumann import young
from gneumann.grid import build_grid

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(2, 0.5, 16, 8, 4.0, 32)


@pytest.fixture(scope="session")
def grid32():
    return build_grid(2, 0.5, 32, 24, 16.0, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


FAMILIES = {
    "power:2": young.power(2),
    "power:3": young.power(3),
    "powerlog:2": young.powerlog(2),
    "doublepower:2,3": young.doublepower(2, 3),
}
