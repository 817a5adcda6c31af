import numpy as np
import pytest

from ecbalance.core import CombinedDataset

_ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(label, passed, detail=""):
        _ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {label}" + (f" -- {detail}" if detail else ""))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def toy_dataset():
    # (z, a, y): two treated, two concurrent controls, two external controls
    z = [1, 1, 1, 1, 0, 0]
    a = [1, 1, 0, 0, 0, 0]
    y = [5.0, 7.0, 3.0, 1.0, 2.0, 4.0]
    X = np.array([[0.0], [1.0], [0.0], [1.0], [0.0], [1.0]])
    return CombinedDataset(y, a, z, X)


@pytest.fixture
def toy_pi():
    return np.array([0.6, 0.6, 0.6, 0.6, 0.4, 0.4])
