import numpy as np
import pytest

from gmatsim.device import build_mesh
from gmatsim.pipeline import DevicePipeline
from gmatsim.presets import DESK_SPACING, desk_device

DESK_BIAS = {"fg": -0.1, "bg": 0.0}

_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion and assert it."""
    store = request.config.stash[_ACCEPTANCE_KEY]

    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[n] = line
        print(line)
        assert ok, line

    return record


@pytest.fixture(scope="session")
def desk():
    dev = desk_device()
    return DevicePipeline(dev, build_mesh(dev, DESK_SPACING))


@pytest.fixture(scope="session")
def desk_gset(desk):
    return desk.gmatrix_set("fg", DESK_BIAS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
