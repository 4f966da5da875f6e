import numpy as np
import pytest

from pushopt.config import scenario_problem


@pytest.fixture(scope="session")
def square():
    return scenario_problem("square")


@pytest.fixture(scope="session")
def tee():
    return scenario_problem("T")


@pytest.fixture(scope="session")
def ell():
    return scenario_problem("L")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
