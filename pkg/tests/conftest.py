import pytest

from abandonment.model import RewardModel, ThresholdDist
from abandonment.solvers import ActionGrid

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def uniform():
    return ThresholdDist.uniform(0.0, 1.0)


@pytest.fixture
def linear():
    return RewardModel.linear()


@pytest.fixture
def grid201():
    return ActionGrid(0.0, 1.0, 201)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
