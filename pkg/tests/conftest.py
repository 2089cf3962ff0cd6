import numpy as np
import pytest

from hoznav.core import GridEnvironment, ObjectInstance, make_rng
from hoznav.rooms import generate_environment


def grid(rows, objects, scene=0, room_id="fixture"):
    """Room from a picture: rows listed north to south, '#' blocked, '.' walkable.

    ``objects`` holds (category, x, z) or (category, x, z, band) tuples; z counts
    up from the bottom row so that yaw 0 (north) moves towards the top.
    """
    walkable = tuple(tuple(ch == "." for ch in row) for row in reversed(rows))
    objs = tuple(ObjectInstance(*o) for o in objects)
    return GridEnvironment(len(rows[0]), len(rows), walkable, objs, scene, room_id)


@pytest.fixture
def open_room():
    # 7x7, four objects on the north wall strip
    rows = ["#######"] + ["......."] * 6
    return grid(rows, [(0, 1, 6), (1, 2, 6), (2, 4, 6), (3, 5, 6)])


@pytest.fixture(scope="session")
def kitchen():
    return generate_environment("kitchen", make_rng(1), room_id="kitchen_fixture")


def random_bags(rng, count, n, density=0.3):
    return (rng.random((count, n)) < density).astype(float)


# one line per acceptance criterion, echoed after the run so it survives output capture
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
