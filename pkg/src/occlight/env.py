"""Room geometry, grid discretization and the discrete (position, velocity) state space."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Rect = tuple[float, float, float, float]  # (x0, y0, x1, y1), closed

DEFAULT_STATIC_PROB = 0.5
N_DIRECTIONS = 8


class EmptyStateSpaceError(ValueError):
    pass


def _in_rect(rect: Rect, x: float, y: float) -> bool:
    x0, y0, x1, y1 = rect
    return x0 <= x <= x1 and y0 <= y <= y1


@dataclass(frozen=True)
class StateVector:
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.vx, self.vy)):
            raise ValueError(f"non-finite state component in {self}")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def is_static(self) -> bool:
        return self.vx == 0.0 and self.vy == 0.0


@dataclass(frozen=True)
class RoomLayout:
    width: float
    depth: float
    invalid_regions: tuple[Rect, ...] = ()
    static_zones: tuple[tuple[Rect, float], ...] = ()
    default_static_prob: float = DEFAULT_STATIC_PROB

    def __post_init__(self):
        if not (self.width > 0 and self.depth > 0):
            raise ValueError("room width and depth must be positive")
        object.__setattr__(self, "invalid_regions", tuple(tuple(map(float, r)) for r in self.invalid_regions))
        object.__setattr__(
            self, "static_zones", tuple((tuple(map(float, r)), float(p)) for r, p in self.static_zones)
        )
        rects = list(self.invalid_regions) + [r for r, _ in self.static_zones]
        for r in rects:
            x0, y0, x1, y1 = r
            if not (0 <= x0 <= x1 <= self.width and 0 <= y0 <= y1 <= self.depth):
                raise ValueError(f"rectangle {r} is not inside the {self.width} x {self.depth} room")
        for _, p in self.static_zones:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"static zone probability {p} outside [0, 1]")
        if not 0.0 <= self.default_static_prob <= 1.0:
            raise ValueError("default_static_prob outside [0, 1]")


@dataclass(frozen=True)
class GridSpec:
    cell_size: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")

    def shape(self, layout: RoomLayout) -> tuple[int, int]:
        """(nx, ny) cells needed to cover the room from the origin."""
        ex = layout.width - self.origin[0]
        ey = layout.depth - self.origin[1]
        # tolerance keeps 7.2 / 0.3 from rounding up to 25
        nx = max(1, math.ceil(ex / self.cell_size - 1e-9))
        ny = max(1, math.ceil(ey / self.cell_size - 1e-9))
        return nx, ny

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin[0]) / self.cell_size))
        iy = int(math.floor((y - self.origin[1]) / self.cell_size))
        return ix, iy

    def center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin[0] + (ix + 0.5) * self.cell_size,
            self.origin[1] + (iy + 0.5) * self.cell_size,
        )


def is_valid_position(layout: RoomLayout, x: float, y: float) -> bool:
    if not (0.0 <= x <= layout.width and 0.0 <= y <= layout.depth):
        return False
    return not any(_in_rect(r, x, y) for r in layout.invalid_regions)


def static_mode_prob(layout: RoomLayout, s: StateVector) -> float:
    if not s.is_static:
        return 0.0
    p = layout.default_static_prob
    for rect, zone_p in layout.static_zones:
        if _in_rect(rect, s.x, s.y):
            p = zone_p  # last declared zone wins
    return p


def velocity_set(speed_levels: Sequence[float]) -> np.ndarray:
    """Rest plus 8 compass directions for each distinct nonzero speed, shape (V, 2)."""
    if len(speed_levels) == 0:
        raise ValueError("speed_levels must be nonempty")
    vels = [(0.0, 0.0)]
    seen = set()
    for s in speed_levels:
        s = float(s)
        if s < 0:
            raise ValueError(f"negative speed level {s}")
        if s == 0 or s in seen:
            continue
        seen.add(s)
        for k in range(N_DIRECTIONS):
            th = 2 * math.pi * k / N_DIRECTIONS
            # round away cos(pi/2) ~ 6e-17 so axis-aligned velocities are exact
            vels.append((round(s * math.cos(th), 12) + 0.0, round(s * math.sin(th), 12) + 0.0))
    return np.array(vels, dtype=float)


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Valid cell centers crossed with a finite velocity set.

    State index ``i = p * n_velocities + v``; positions are ordered row by row
    from the grid origin, velocity 0 is always the rest velocity.
    """

    layout: RoomLayout
    grid: GridSpec
    positions: np.ndarray  # (P, 2)
    velocities: np.ndarray  # (V, 2)
    cells: np.ndarray  # (P, 2) integer (ix, iy)
    cell_index: dict[tuple[int, int], int] = field(repr=False)

    @property
    def n_positions(self) -> int:
        return len(self.positions)

    @property
    def n_velocities(self) -> int:
        return len(self.velocities)

    def __len__(self) -> int:
        return self.n_positions * self.n_velocities

    @property
    def state_position_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_positions), self.n_velocities)

    @property
    def states(self) -> np.ndarray:
        """(M, 4) array of [x, y, vx, vy]."""
        pos = np.repeat(self.positions, self.n_velocities, axis=0)
        vel = np.tile(self.velocities, (self.n_positions, 1))
        return np.hstack([pos, vel])

    def state(self, i: int) -> StateVector:
        p, v = divmod(int(i), self.n_velocities)
        return StateVector(*self.positions[p], *self.velocities[v])

    def index_of(self, position_index: int, velocity_index: int = 0) -> int:
        return position_index * self.n_velocities + velocity_index

    def position_index(self, x: float, y: float) -> int | None:
        """Index of the valid cell containing (x, y), or None."""
        return self.cell_index.get(self.grid.cell_of(x, y))

    def nearest_position_index(self, x: float, y: float) -> int:
        idx = self.position_index(x, y)
        if idx is not None:
            return idx
        d2 = ((self.positions - (x, y)) ** 2).sum(axis=1)
        return int(np.argmin(d2))

    def nearest_velocity_index(self, vx: float, vy: float) -> int:
        d2 = ((self.velocities - (vx, vy)) ** 2).sum(axis=1)
        return int(np.argmin(d2))

    def static_probs(self) -> np.ndarray:
        """Pr^S for every state index."""
        out = np.zeros(len(self))
        for p, (x, y) in enumerate(self.positions):
            out[p * self.n_velocities] = static_mode_prob(self.layout, StateVector(x, y))
        return out


def build_state_space(layout: RoomLayout, grid: GridSpec, speed_levels: Sequence[float]) -> StateSpace:
    vels = velocity_set(speed_levels)
    nx, ny = grid.shape(layout)
    positions, cells = [], []
    for iy in range(ny):
        for ix in range(nx):
            x, y = grid.center(ix, iy)
            if is_valid_position(layout, x, y):
                positions.append((x, y))
                cells.append((ix, iy))
    if not positions:
        raise EmptyStateSpaceError("invalid regions cover every grid cell")
    cells_arr = np.array(cells, dtype=int)
    return StateSpace(
        layout=layout,
        grid=grid,
        positions=np.array(positions, dtype=float),
        velocities=vels,
        cells=cells_arr,
        cell_index={(int(c[0]), int(c[1])): k for k, c in enumerate(cells_arr)},
    )
