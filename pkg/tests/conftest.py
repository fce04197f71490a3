import numpy as np
import pytest

from atomarray.greens import RegularizationParams
from atomarray.model import BIPARTITE_Z, FourLevelBipartite, LatticeSpec

A_FIG3 = 0.24


@pytest.fixture(scope="session")
def cubic():
    return LatticeSpec(A_FIG3)


@pytest.fixture(scope="session")
def bipartite():
    return LatticeSpec(A_FIG3, BIPARTITE_Z)


@pytest.fixture(scope="session")
def reg():
    return RegularizationParams(0.09 * A_FIG3)


@pytest.fixture(scope="session")
def gapped_scheme():
    return FourLevelBipartite(0.96, 3.85, 3.99)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = []


@pytest.fixture(scope="session")
def criteria():
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, text in sorted(_CRITERIA):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {text}")
