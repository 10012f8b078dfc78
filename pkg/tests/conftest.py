import numpy as np
import pytest

from hydrarm import testbed
from hydrarm.excitation import optimize_trajectory
from hydrarm.model import default_model
from hydrarm.reduction import reduce_model


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture(scope="session")
def mapping(model):
    return reduce_model(model)


@pytest.fixture(scope="session")
def truth(model):
    return testbed.ground_truth_links(model)


@pytest.fixture(scope="session")
def designed(model, mapping):
    return optimize_trajectory(model, mapping, seed=0, budget=300)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
