import numpy as np
import pytest

from fracschrod import potential as pot
from fracschrod import spectral as sp
from fracschrod.domain import build_interval
from fracschrod.operator import assemble

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def form_a1():
    return assemble(build_interval(-1.0, 1.0, 400), 1.0)


@pytest.fixture(scope="session")
def form_a05():
    return assemble(build_interval(-1.0, 1.0, 400), 0.5)


@pytest.fixture(scope="session")
def small_a05():
    return assemble(build_interval(-1.0, 1.0, 120), 0.5)


@pytest.fixture(scope="session")
def hardy_half(form_a05):
    spec = pot.PotentialSpec.hardy("hardy_origin", 1, 0.5, 0.5)
    return pot.evaluate(spec, form_a05.grid)


@pytest.fixture(scope="session")
def free_green_a05(form_a05):
    return sp.green_matrix(form_a05, None)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
