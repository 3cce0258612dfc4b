import numpy as np
import pytest

from occlight.env import GridSpec, RoomLayout, build_state_space
from occlight.lighting import LuminaireSpec, synthetic_field


@pytest.fixture
def small_room():
    layout = RoomLayout(3.0, 2.1, invalid_regions=[(1.2, 0.9, 1.8, 1.2)], static_zones=[((0.0, 0.0, 0.9, 0.9), 0.9)])
    space = build_state_space(layout, GridSpec(0.3), (0.0, 0.6))
    return layout, space


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def lights_over(space, xs, z=2.75, f_full=4000.0, height=0.75):
    lums = [LuminaireSpec(f"L{i}", (x, y, z), f_full, 100.0 / f_full) for i, (x, y) in enumerate(xs)]
    fields = [synthetic_field(l, space, height) for l in lums]
    return lums, fields


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
