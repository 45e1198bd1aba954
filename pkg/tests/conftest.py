import numpy as np
import pytest

from brwends.ball import build_ball
from brwends.group import make_group, preset
from brwends.walk import uniform_measure


@pytest.fixture(scope="session")
def free():
    return preset("free_rank2")


@pytest.fixture(scope="session")
def surface():
    return preset("surface_genus2")


@pytest.fixture(scope="session")
def free_group(free):
    return make_group(free)


@pytest.fixture(scope="session")
def surface_group(surface):
    return make_group(surface)


@pytest.fixture(scope="session")
def free_ball8(free_group):
    return build_ball(free_group, 8)


@pytest.fixture(scope="session")
def surface_ball5(surface_group):
    return build_ball(surface_group, 5)


@pytest.fixture(scope="session")
def surface_ball6(surface_group):
    return build_ball(surface_group, 6)


@pytest.fixture(scope="session")
def free_srw(free):
    return uniform_measure(free, lazy=0.0)


@pytest.fixture(scope="session")
def surface_q(surface):
    return uniform_measure(surface)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, printed as one line per criterion after the run
_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def verdicts(request):
    return request.config.stash.setdefault(_VERDICTS, {})


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_VERDICTS, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(log, key=lambda k: (int(k.rstrip("abc")), k)):
        verdict, detail = log[key]
        terminalreporter.write_line(f"criterion {key:<3} {verdict}  {detail}")
