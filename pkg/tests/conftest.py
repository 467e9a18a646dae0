import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracvar.core import DomainMask, GridSpec

settings.register_profile(
    "fracvar",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("fracvar")


@pytest.fixture(params=["numba", "numpy"])
def accel_path(request, monkeypatch):
    """Run the test once per kernel path."""
    monkeypatch.setenv("FRACVAR_NUMBA", "1" if request.param == "numba" else "0")
    return request.param


@pytest.fixture
def grid1d():
    return GridSpec(1, 512, 4.0)


@pytest.fixture
def grid2d():
    return GridSpec(2, 64, 4.0)


@pytest.fixture
def mask1d(grid1d):
    return DomainMask(grid1d, (0.0,), 1.0, 1.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
