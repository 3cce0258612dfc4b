"""Closed-loop scenario runs (occupant -> sensors -> tracker -> controller) and metrics."""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import control
from .control import ControlCommand, RequirementSpec
from .env import GridSpec, RoomLayout, StateSpace, StateVector, build_state_space, is_valid_position
from .lighting import (
    AttenuationField,
    IlluminationSensorSpec,
    LuminaireSpec,
    SystemPowerConfig,
    illumination_matrix,
    synthetic_field,
)
from .localization import DEFAULT_TH_C, Tracker
from .motion import DEFAULT_REL_CUTOFF, MotionParams, TransitionKernel, build_transition_kernel, sample_next_state
from .sensing import MeasurementVector, SensorSpec, sample_measurements

CONTROLLERS = ("proposed", "proposed-greedy", "proposed-dimmer", "perfect", "batch", "individual")
COMPARE_CONTROLLERS = ("batch", "individual", "perfect", "proposed")


@dataclass(frozen=True)
class WalkSpec:
    """How the simulated occupant moves.

    ``waypoints``: scripted (x, y, dwell_steps) visited in order at ``speed``.
    ``random_waypoints``: ``n_waypoints`` seeded targets on valid cells, reached
    by shortest paths on a ``route_cell`` routing grid, dwelling a uniform
    number of steps in ``dwell``.  ``free``: the motion model's own sampler
    started at ``start``.
    """

    mode: str = "waypoints"
    waypoints: tuple[tuple[float, float, int], ...] = ()
    speed: float = 0.6
    start: tuple[float, float] | None = None
    n_waypoints: int = 6
    dwell: tuple[int, int] = (5, 30)
    route_cell: float = 0.3

    def __post_init__(self):
        if self.mode not in ("waypoints", "random_waypoints", "free"):
            raise ValueError(f"unknown walk mode {self.mode!r}")
        if not self.speed > 0:
            raise ValueError("walk speed must be positive")
        if self.mode == "waypoints" and not self.waypoints:
            raise ValueError("waypoints walk needs at least one waypoint")
        if self.dwell[0] < 0 or self.dwell[1] < self.dwell[0]:
            raise ValueError("dwell must be an ordered pair of non-negative step counts")


@dataclass(frozen=True)
class Scenario:
    layout: RoomLayout
    grid: GridSpec
    luminaires: tuple[LuminaireSpec, ...]
    sensors: tuple[SensorSpec, ...]
    illumination_sensors: tuple[IlluminationSensorSpec, ...]
    motion: MotionParams = MotionParams()
    walk: WalkSpec = WalkSpec(mode="free", start=None)
    ceiling_sensors: tuple[SensorSpec, ...] = ()  # ceiling_sensors[l] triggers luminaires[l]
    speed_levels: tuple[float, ...] = (0.0, 0.6, 1.2)
    surface_height: float = 0.75
    reflection_gain: float = 0.0
    c_s: float = 0.0
    f_min: float = control.DEFAULT_F_MIN
    th_c: float = DEFAULT_TH_C
    delay: float = control.DEFAULT_DELAY
    controller: str = "proposed"
    duration: int = 300
    environment: tuple[tuple[float, ...], ...] = ()  # lux per illumination sensor, one row per step
    kernel_rel_cutoff: float = DEFAULT_REL_CUTOFF
    entry: tuple[float, float] | None = None  # known entrance: walks start here, tracker prior sits here

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("duration must be >= 1")
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}")
        if not self.illumination_sensors:
            raise ValueError("at least one illumination sensor is required")
        ids = [l.id for l in self.luminaires]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate luminaire ids")
        if self.ceiling_sensors and len(self.ceiling_sensors) != len(self.luminaires):
            raise ValueError(
                f"{len(self.ceiling_sensors)} ceiling sensors for {len(self.luminaires)} luminaires"
            )
        for lum in self.luminaires:
            if lum.position[2] <= self.surface_height:
                raise ValueError(f"luminaire {lum.id} is below the working surface")
        for s in self.illumination_sensors:
            if not is_valid_position(self.layout, *s.position):
                raise ValueError(f"illumination sensor {s.id} is not at a valid position")
        for row in self.environment:
            if len(row) != len(self.illumination_sensors):
                raise ValueError("environment rows must give one value per illumination sensor")
        if not 0.0 <= self.th_c < 1.0:
            raise ValueError("th_c must lie in [0, 1)")
        if self.entry is not None:
            if not is_valid_position(self.layout, *self.entry):
                raise ValueError(f"entry {self.entry} is not a valid position")
            if self.walk.mode == "waypoints" and tuple(self.walk.waypoints[0][:2]) != tuple(self.entry):
                raise ValueError("a scripted walk must start at the entry")
            if self.walk.mode == "free" and self.walk.start is not None and tuple(self.walk.start) != tuple(self.entry):
                raise ValueError("a free walk with an entry must start at it")


@dataclass(eq=False)
class World:
    """Seed-independent precomputation for a scenario (state space, kernel, fields)."""

    space: StateSpace
    kernel: TransitionKernel | None
    fields: list[AttenuationField]
    illum: np.ndarray  # (P, L)
    sensor_cell: np.ndarray  # illumination sensor -> position index
    nearest_sensor: np.ndarray  # position index -> illumination sensor


def build_world(sc: Scenario, with_kernel: bool = True) -> World:
    space = build_state_space(sc.layout, sc.grid, sc.speed_levels)
    kernel = build_transition_kernel(space, sc.layout, sc.motion, sc.kernel_rel_cutoff) if with_kernel else None
    fields = [synthetic_field(l, space, sc.surface_height, sc.reflection_gain) for l in sc.luminaires]
    sensor_pos = np.array([s.position for s in sc.illumination_sensors])
    d2 = ((space.positions[:, None, :] - sensor_pos[None, :, :]) ** 2).sum(axis=2)
    return World(
        space=space,
        kernel=kernel,
        fields=fields,
        illum=illumination_matrix(fields, sc.luminaires),
        sensor_cell=np.array([space.nearest_position_index(*p) for p in sensor_pos]),
        nearest_sensor=np.argmin(d2, axis=1),
    )


@dataclass(frozen=True)
class TraceRecord:
    t: int
    true_state: StateVector
    bits: tuple[int, ...]
    mle_state: StateVector | None
    n_candidates: int
    sw: tuple[float, ...]
    power: float
    illumination: float
    satisfied: bool
    feasible: bool
    reinitialized: bool = False

    @property
    def loc_error(self) -> float:
        if self.mle_state is None:
            return math.nan
        return math.hypot(self.mle_state.x - self.true_state.x, self.mle_state.y - self.true_state.y)


# ---------------------------------------------------------------- trajectories


def _route(layout: RoomLayout, cell: float, a: tuple[float, float], b: tuple[float, float]) -> list[tuple[float, float]]:
    """Shortest 8-connected path of routing-cell centers from a to b, ending exactly at b."""
    g = GridSpec(cell)
    nx, ny = g.shape(layout)

    def ok(ix, iy):
        return 0 <= ix < nx and 0 <= iy < ny and is_valid_position(layout, *g.center(ix, iy))

    start, goal = g.cell_of(*a), g.cell_of(*b)
    prev = {start: None}
    queue = deque([start])
    while queue:
        c = queue.popleft()
        if c == goal:
            break
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)):
            n = (c[0] + dx, c[1] + dy)
            # no corner cutting past furniture
            if n in prev or not ok(*n) or (dx and dy and not (ok(c[0] + dx, c[1]) and ok(c[0], c[1] + dy))):
                continue
            prev[n] = c
            queue.append(n)
    if goal not in prev:
        return [b]
    path = []
    c = prev[goal]
    while c is not None and c != start:
        path.append(g.center(*c))
        c = prev[c]
    path.reverse()
    return path + [b]


def _follow(
    start: tuple[float, float], legs: Iterable[tuple[list[tuple[float, float]], int]], speed: float, dt: float, n: int
) -> list[StateVector]:
    """Constant-speed traversal of polylines; each leg ends with a dwell."""
    out = [StateVector(*start)]
    x, y = start
    step = speed * dt
    for points, dwell in legs:
        for tx, ty in points:
            while len(out) < n:
                d = math.hypot(tx - x, ty - y)
                if d <= 1e-12:
                    break
                if d <= step:
                    nx_, ny_ = tx, ty
                else:
                    nx_, ny_ = x + (tx - x) * step / d, y + (ty - y) * step / d
                out.append(StateVector(nx_, ny_, (nx_ - x) / dt, (ny_ - y) / dt))
                x, y = nx_, ny_
        for _ in range(dwell):
            if len(out) >= n:
                break
            out.append(StateVector(x, y))
        if len(out) >= n:
            break
    while len(out) < n:
        out.append(StateVector(x, y))
    return out[:n]


def generate_trajectory(sc: Scenario, rng: np.random.Generator, space: StateSpace) -> list[StateVector]:
    w, n, dt = sc.walk, sc.duration, sc.motion.dt
    if w.mode == "waypoints":
        (x0, y0, d0), rest = w.waypoints[0], w.waypoints[1:]
        legs = [([(x0, y0)], int(d0))]
        cur = (x0, y0)
        for x, y, d in rest:
            legs.append((_route(sc.layout, w.route_cell, cur, (x, y)), int(d)))
            cur = (x, y)
        return _follow((x0, y0), legs, w.speed, dt, n)
    if w.mode == "random_waypoints":
        route_space = build_state_space(sc.layout, GridSpec(w.route_cell), (0.0,))
        pts = route_space.positions
        picks = rng.integers(0, len(pts), w.n_waypoints + 1)
        dwells = rng.integers(w.dwell[0], w.dwell[1] + 1, w.n_waypoints + 1)
        start = tuple(pts[picks[0]]) if sc.entry is None else tuple(sc.entry)
        legs = [([start], int(dwells[0]))]
        cur = start
        for k in range(1, w.n_waypoints + 1):
            target = tuple(pts[picks[k]])
            legs.append((_route(sc.layout, w.route_cell, cur, target), int(dwells[k])))
            cur = target
        return _follow(start, legs, w.speed, dt, n)
    # free walk under the motion model
    if sc.entry is not None:
        s = StateVector(*sc.entry)
    elif w.start is not None:
        s = StateVector(*w.start)
    else:
        s = StateVector(*space.positions[rng.integers(space.n_positions)])
    out = [s]
    while len(out) < n:
        s = sample_next_state(s, sc.motion, sc.layout, rng, velocities=space.velocities)
        out.append(s)
    return out


# ---------------------------------------------------------------- closed loop


def _env_row(sc: Scenario, t: int) -> np.ndarray:
    if not sc.environment:
        return np.zeros(len(sc.illumination_sensors))
    return np.asarray(sc.environment[min(t, len(sc.environment) - 1)], dtype=float)


def _streams(seed: int) -> tuple[np.random.Generator, ...]:
    walk, desk, ceiling = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.default_rng(s) for s in (walk, desk, ceiling))


def run_scenario(
    sc: Scenario,
    seed: int,
    world: World | None = None,
    controller: str | None = None,
    posterior_sink=None,
) -> list[TraceRecord]:
    """Simulate ``sc.duration`` steps.  Randomness comes only from ``seed``, split
    into independent walk / desk-sensor / ceiling-sensor streams, so every
    controller sees the same occupant and the same measurements."""
    controller = controller or sc.controller
    if controller not in CONTROLLERS:
        raise ValueError(f"unknown controller {controller!r}")
    if controller == "individual" and not sc.ceiling_sensors:
        raise ValueError("individual control needs one ceiling sensor per luminaire")
    needs_tracker = controller.startswith("proposed")
    if world is None or (needs_tracker and world.kernel is None):
        world = build_world(sc, with_kernel=needs_tracker)
    space, A = world.space, world.illum
    lums, cfg, dt = sc.luminaires, SystemPowerConfig(sc.c_s), sc.motion.dt
    rng_walk, rng_desk, rng_ceiling = _streams(seed)
    traj = generate_trajectory(sc, rng_walk, space)
    tracker = Tracker(space, world.kernel, sc.sensors, sc.th_c, sc.entry) if needs_tracker else None

    n_l = len(lums)
    prev_sw = np.zeros(n_l)
    # walking in through a known entrance counts as a detection for batch control
    last_any = 0.0 if sc.entry is not None else -math.inf
    last_light = [-math.inf] * n_l
    records = []
    for t, s in enumerate(traj):
        prev = traj[t - 1] if t else s
        b = sample_measurements(sc.sensors, prev, s, rng_desk, t)
        bc = sample_measurements(sc.ceiling_sensors, prev, s, rng_ceiling, t) if sc.ceiling_sensors else None
        now = t * dt
        if any(b.bits):
            last_any = now
        if bc is not None:
            for l, bit in enumerate(bc.bits):
                if bit:
                    last_light[l] = now

        # illumination sensors see ambient light plus the lights currently applied
        env_true = _env_row(sc, t)
        readings = env_true + A[world.sensor_cell] @ prev_sw
        env_est_sensor = np.maximum(0.0, readings - A[world.sensor_cell] @ prev_sw)
        env_est = env_est_sensor[world.nearest_sensor]

        cell = space.nearest_position_index(s.x, s.y)
        mle, n_cand, reinit = None, 0, False
        if tracker is not None:
            loc = tracker.step(b)
            mle, n_cand, reinit = loc.mle_state, len(loc.candidates), tracker.field.reinitialized
            if posterior_sink is not None:
                posterior_sink(t, tracker.field.values)
            reqs = [RequirementSpec(loc.candidates, sc.f_min)]
            if controller == "proposed":
                cmd = control.optimize_onoff(lums, world.fields, env_est, reqs, cfg, "exhaustive")
            elif controller == "proposed-greedy":
                cmd = control.optimize_onoff(lums, world.fields, env_est, reqs, cfg, "greedy")
            else:
                cmd = control.optimize_dimmer(lums, world.fields, env_est, reqs, cfg)
        elif controller == "perfect":
            cmd = control.perfect_localization_control(lums, world.fields, env_est, cell, cfg, sc.f_min)
        elif controller == "batch":
            cmd = control.batch_control(lums, cfg, last_any, now, sc.delay)
        else:
            cmd = control.individual_control(lums, cfg, last_light, now, sc.delay)

        lux = float(A[cell] @ cmd.sw + env_true[world.nearest_sensor[cell]])
        records.append(
            TraceRecord(
                t=t,
                true_state=s,
                bits=b.bits,
                mle_state=mle,
                n_candidates=n_cand,
                sw=tuple(float(v) for v in cmd.sw),
                power=cmd.power,
                illumination=lux,
                satisfied=lux >= sc.f_min,
                feasible=cmd.feasible,
                reinitialized=reinit,
            )
        )
        prev_sw = cmd.sw
    return records


def run_controllers(
    sc: Scenario, seed: int, controllers: Sequence[str] = COMPARE_CONTROLLERS, world: World | None = None
) -> dict[str, list[TraceRecord]]:
    if world is None:
        world = build_world(sc, with_kernel=any(c.startswith("proposed") for c in controllers))
    return {c: run_scenario(sc, seed, world, c) for c in controllers}


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class ControllerMetrics:
    controller: str
    mean_power: float
    saving_rate: float  # vs. batch; nan without a batch run
    satisfaction: float
    mean_illumination: float
    max_illumination: float
    min_illumination: float
    mean_loc_error: float
    mean_lights_on: float
    steps: int


@dataclass(frozen=True)
class MetricsSummary:
    rows: tuple[ControllerMetrics, ...]

    def __getitem__(self, controller: str) -> ControllerMetrics:
        for r in self.rows:
            if r.controller == controller:
                return r
        raise KeyError(controller)

    def to_text(self) -> str:
        lines = [
            f"{'controller':<16}{'power[W]':>10}{'saving':>9}{'satisf.':>9}"
            f"{'mean lux':>10}{'min lux':>9}{'max lux':>9}{'lights':>8}{'loc err[m]':>12}"
        ]
        for r in self.rows:
            lines.append(
                f"{r.controller:<16}{r.mean_power:>10.1f}{r.saving_rate:>9.3f}{r.satisfaction:>9.3f}"
                f"{r.mean_illumination:>10.1f}{r.min_illumination:>9.1f}{r.max_illumination:>9.1f}"
                f"{r.mean_lights_on:>8.2f}{r.mean_loc_error:>12.3f}"
            )
        return "\n".join(lines)


def compute_metrics(traces: dict[str, Sequence[Sequence[TraceRecord]] | Sequence[TraceRecord]]) -> MetricsSummary:
    """Aggregate one or more runs per controller.

    Values may be a single trace or a list of traces (pooled step-wise).
    """
    pooled = {}
    for name, runs in traces.items():
        if not runs:
            raise ValueError(f"no records for controller {name!r}")
        if isinstance(runs[0], TraceRecord):
            runs = [runs]
        pooled[name] = [r for run in runs for r in run]
    batch_power = float(np.mean([r.power for r in pooled["batch"]])) if "batch" in pooled else math.nan
    rows = []
    for name, recs in pooled.items():
        power = np.array([r.power for r in recs])
        lux = np.array([r.illumination for r in recs])
        errs = np.array([r.loc_error for r in recs])
        mean_power = float(power.mean())
        rows.append(
            ControllerMetrics(
                controller=name,
                mean_power=mean_power,
                saving_rate=1.0 - mean_power / batch_power if batch_power > 0 else math.nan,
                satisfaction=float(np.mean([r.satisfied for r in recs])),
                mean_illumination=float(lux.mean()),
                max_illumination=float(lux.max()),
                min_illumination=float(lux.min()),
                mean_loc_error=float(np.nanmean(errs)) if np.isfinite(errs).any() else math.nan,
                mean_lights_on=float(np.mean([sum(1 for v in r.sw if v > 0) for r in recs])),
                steps=len(recs),
            )
        )
    return MetricsSummary(tuple(rows))


def dominance_violations(traces: dict[str, Sequence[TraceRecord]], tol: float = 1e-9) -> dict[str, list[int]]:
    """Steps breaking power(perfect) <= power(proposed, feasible) <= power(batch).

    The upper link is only checked while batch holds its lights on (occupant detected).
    """
    perfect, proposed, batch = traces["perfect"], traces["proposed"], traces["batch"]
    low, high = [], []
    for a, p, b in zip(perfect, proposed, batch):
        if not p.feasible:
            continue
        if a.power > p.power + tol:
            low.append(p.t)
        if any(b.sw) and p.power > b.power + tol:
            high.append(p.t)
    return {"perfect>proposed": low, "proposed>batch": high}


# ---------------------------------------------------------------- sweeps


def localization_errors(sc: Scenario, seeds: Iterable[int], world: World | None = None) -> np.ndarray:
    """Mean MLE position error of each seeded walk (proposed controller's tracker only)."""
    if world is None:
        world = build_world(sc)
    out = []
    for seed in seeds:
        rng_walk, rng_desk, _ = _streams(seed)
        traj = generate_trajectory(sc, rng_walk, world.space)
        tracker = Tracker(world.space, world.kernel, sc.sensors, sc.th_c, sc.entry)
        errs = []
        for t, s in enumerate(traj):
            b = sample_measurements(sc.sensors, traj[t - 1] if t else s, s, rng_desk, t)
            loc = tracker.step(b)
            errs.append(math.hypot(loc.mle_state.x - s.x, loc.mle_state.y - s.y))
        out.append(float(np.mean(errs)))
    return np.array(out)


def grid_sweep(
    sc: Scenario, cell_sizes: Sequence[float], runs: int, seed: int = 0, jobs: int = 1
) -> list[tuple[float, float, np.ndarray]]:
    """(cell size, mean error, per-run errors) for each size, same seeded walks for every size."""
    if any(c <= 0 for c in cell_sizes):
        raise ValueError("cell sizes must be positive")
    seeds = [seed + k for k in range(runs)]
    scenarios = [replace(sc, grid=GridSpec(c, sc.grid.origin)) for c in cell_sizes]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(localization_errors, scenarios, [seeds] * len(scenarios)))
    else:
        results = [localization_errors(s, seeds) for s in scenarios]
    return [(c, float(r.mean()), r) for c, r in zip(cell_sizes, results)]


# ---------------------------------------------------------------- CSV output

TRACE_COLUMNS = (
    "t", "x", "y", "vx", "vy", "bits", "mle_x", "mle_y", "n_candidates",
    "sw", "power", "illumination", "satisfied", "feasible", "loc_error",
)


def write_trace_csv(fh: io.TextIOBase, records: Sequence[TraceRecord], seed: int, controller: str) -> None:
    fh.write(f"# seed: {seed}\n# controller: {controller}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in records:
        w.writerow(
            [
                r.t,
                repr(r.true_state.x), repr(r.true_state.y), repr(r.true_state.vx), repr(r.true_state.vy),
                "".join(map(str, r.bits)),
                "" if r.mle_state is None else repr(r.mle_state.x),
                "" if r.mle_state is None else repr(r.mle_state.y),
                r.n_candidates,
                " ".join(f"{v:g}" for v in r.sw),
                repr(r.power),
                repr(r.illumination),
                int(r.satisfied),
                int(r.feasible),
                "" if r.mle_state is None else repr(r.loc_error),
            ]
        )


def write_commands_csv(fh: io.TextIOBase, records: Sequence[TraceRecord], seed: int) -> None:
    fh.write(f"# seed: {seed}\n")
    n = len(records[0].sw) if records else 0
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", *[f"sw_{l + 1}" for l in range(n)], "power", "feasible"])
    for r in records:
        w.writerow([r.t, *[f"{v:g}" for v in r.sw], repr(r.power), int(r.feasible)])


def write_metrics_csv(fh: io.TextIOBase, summary: MetricsSummary, seed: int) -> None:
    fh.write(f"# seed: {seed}\n")
    cols = list(ControllerMetrics.__dataclass_fields__)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for r in summary.rows:
        w.writerow([getattr(r, c) for c in cols])


def write_sweep_csv(fh: io.TextIOBase, table, seed: int, runs: int) -> None:
    fh.write(f"# seed: {seed}\n# runs: {runs}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["cell_size", "mean_error", "std_error"])
    for c, mean, errs in table:
        w.writerow([c, repr(mean), repr(float(np.std(errs)))])
