import numpy as np
import pytest

from hybridgd.objectives import quadratic_instance


@pytest.fixture
def quad2():
    """L(x) = 1/2 x'diag(2,4)x + (1,1)'x: x* = (-0.5, -0.25), L* = -0.375."""
    return quadratic_instance(np.diag([2.0, 4.0]), np.array([1.0, 1.0]))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
