import os

import numpy as np
import pytest

from orthosonar.config import DATA_DIR
from orthosonar.geometry import PlanarPose
from orthosonar.scene import Cylinder, Scene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def single_cylinder():
    """Cylinder dead ahead of a sensor at the origin, front surface at 9.75 m."""
    return Scene([Cylinder((10.0, 0.0, -5.0), 0.25, 10.0)], 10.0)


@pytest.fixture
def origin_pose():
    return PlanarPose(0.0, 0.0, 0.0, 0.0)


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records and prints one pass/fail line; returns ``ok``."""

    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append((n, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES, key=lambda t: t[0]):
        terminalreporter.write_line(line)
