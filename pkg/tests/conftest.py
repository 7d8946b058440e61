import numpy as np
import pytest
from hypothesis import settings

from clfcbf.models import CircularObstacleCbf, QuadraticClf, builtin_system
from clfcbf.nominal import NominalGains
from clfcbf.shaped import ShapedGains

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def V():
    return QuadraticClf((6.0, 1.0))


@pytest.fixture
def h():
    return CircularObstacleCbf((0.0, 3.0), 1.5)


@pytest.fixture
def integrator():
    return builtin_system("integrator")


@pytest.fixture
def gains():
    return NominalGains()


@pytest.fixture
def sgains():
    return ShapedGains()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
