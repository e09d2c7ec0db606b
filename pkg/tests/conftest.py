import numpy as np
import pytest

from floorplan_fpv import _accel
from floorplan_fpv.graph import AccessGraph

_accel.tune_allocator()

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def make(labels, edges, gid="g"):
    return AccessGraph.build(gid, labels, edges)


@pytest.fixture
def path3():
    return make(["en", "hw", "we"], [(0, 1), (1, 2)], "path3")


@pytest.fixture
def path4():
    return make(["en", "hw", "dk", "we"], [(0, 1), (1, 2), (2, 3)], "path4")


@pytest.fixture
def star4():
    # en in the centre with three leaves
    return make(["en", "hw", "we", "ja"], [(0, 1), (0, 2), (0, 3)], "star4")


@pytest.fixture
def plan():
    """Hand-made 3LDK-like plan used across modules."""
    labels = ["en", "hw", "dk", "ja", "we", "we", "bt", "la", "to", "bl", "cl", "cl"]
    edges = [(0, 1), (1, 2), (2, 3), (2, 4), (1, 5), (1, 7), (7, 6), (1, 8), (2, 9), (0, 10), (4, 11), (3, 4)]
    return make(labels, edges, "plan")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
