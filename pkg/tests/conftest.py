import numpy as np
import pytest

from elcont.geometry import rectangle_mesh
from elcont.problems import lef_microforce, lef_test


@pytest.fixture(scope="session")
def unit_mesh():
    """Symmetric criss-cross mesh of (-0.5, 0.5)^2."""
    return rectangle_mesh(0.5, 0.5, 0.1)


@pytest.fixture(scope="session")
def coarse_mesh():
    return rectangle_mesh(0.5, 0.5, 0.25)


@pytest.fixture(scope="session")
def lef():
    return lef_test()


@pytest.fixture(scope="session")
def micro():
    return lef_microforce()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        lines.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(lines[-1])
        return ok

    return record


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(ln)
