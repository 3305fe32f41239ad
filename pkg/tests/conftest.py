import numpy as np
import pytest

from quadplan.world import maps
from quadplan.world.geometry import Polyline


@pytest.fixture
def straight3():
    return maps.straight_highway(3)


@pytest.fixture
def single_lane():
    return maps.straight_highway(1)


@pytest.fixture
def bend_polyline():
    return Polyline([[0.0, 0.0], [10.0, 0.0], [15.0, 6.0], [25.0, 8.0], [30.0, 2.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
