import numpy as np
import pytest

from visbeam.channel import ArrayConfig, BeamCodebook
from visbeam.geometry import BeamLayout, CameraModel


@pytest.fixture
def array_cfg():
    return ArrayConfig()


@pytest.fixture
def small_cam():
    return CameraModel(160, 90, vanishing_point=(110.0, -300.0))


@pytest.fixture
def small_layout(small_cam, array_cfg):
    return BeamLayout(BeamCodebook.uniform(16, (-45.0, 45.0), array_cfg), small_cam)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def criterion(request):
    """``criterion(name, ok, detail)`` prints one PASS/FAIL line and keeps it for the summary."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
