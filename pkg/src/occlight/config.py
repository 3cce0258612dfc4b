"""Scenario files: strict JSON schema, the defaults table, and serialization."""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from .env import GridSpec, RoomLayout
from .harness import CONTROLLERS, Scenario, WalkSpec
from .lighting import IlluminationSensorSpec, LuminaireSpec
from .motion import MotionParams
from .sensing import SensorSpec

# key path -> (default, meaning).  Every optional setting is read from here.
DEFAULTS: dict[str, tuple[Any, str]] = {
    "room.invalid_regions": ([], "furniture / out-of-bounds rectangles [x0, y0, x1, y1] in m"),
    "room.static_zones": ([], "list of {rect, p}: probability of staying static, last declared wins"),
    "room.default_static_prob": (0.5, "static-mode probability outside every zone"),
    "grid.origin": ([0.0, 0.0], "grid origin in m"),
    "speed_levels": ([0.0, 0.6, 1.2], "speeds (m/s) of the discrete velocity set, 8 headings each"),
    "motion.sigma_a": (0.5, "acceleration std, m/s^2"),
    "motion.sigma_v": (0.2, "position-deviation velocity std, m/s"),
    "motion.dt": (1.0, "step period, s"),
    "motion.kernel_rel_cutoff": (1e-6, "transition weights below this fraction of the row max are dropped"),
    "lighting.surface_height": (0.75, "working-surface height, m"),
    "lighting.reflection_gain": (0.0, "diffuse reflection gain applied to the Lambertian model"),
    "lighting.c_s": (0.0, "constant system overhead power, W"),
    "luminaire.lambertian_order": (1.0, "Lambertian order m"),
    "sensor.p_d_moving": (0.8, "detection probability for a moving occupant"),
    "sensor.p_d_static": (0.1, "detection probability for a static occupant"),
    "sensor.decay_rate": (4.0, "coverage decay rate beyond the radius"),
    "sensor.decay_shape": (2.0, "coverage decay exponent beyond the radius"),
    "sensor.p_false_alarm": (0.0, "false alarm probability"),
    "ceiling_sensors": ([], "one per luminaire, in luminaire order; used by individual control"),
    "control.controller": ("proposed", "controller for `run`: " + ", ".join(CONTROLLERS)),
    "control.f_min": (400.0, "minimum illumination at the occupant, lux"),
    "control.th_c": (0.05, "candidate threshold on the normalized position marginal"),
    "control.delay": (30.0, "hold time of batch / individual control, s"),
    "simulation.duration": (300, "number of steps"),
    "simulation.entry": (None, "known entrance [x, y]; walks start and the tracker prior sits here"),
    "simulation.environment": ([], "ambient lux per illumination sensor, one row per step (last row held)"),
    "walk.mode": ("free", "waypoints | random_waypoints | free"),
    "walk.waypoints": ([], "scripted [x, y, dwell_steps] list"),
    "walk.speed": (0.6, "walking speed for waypoint modes, m/s"),
    "walk.start": (None, "start [x, y] of a free walk (random valid cell when omitted)"),
    "walk.n_waypoints": (6, "targets per random-waypoint walk"),
    "walk.dwell": ([5, 30], "inclusive dwell-step range per random waypoint"),
    "walk.route_cell": (0.3, "routing-grid cell for waypoint paths, m"),
}


class ConfigError(ValueError):
    pass


def defaults_reference() -> str:
    """Markdown table of every default."""
    lines = ["| key | default | meaning |", "|---|---|---|"]
    for key, (val, doc) in DEFAULTS.items():
        lines.append(f"| `{key}` | `{json.dumps(val)}` | {doc} |")
    return "\n".join(lines)


def _keys(d: Any, path: str, allowed: set[str]) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{path or '<root>'}: unknown key(s) {', '.join(extra)}")
    return d


def _get(d: dict, path: str, key: str, kind: str, default_key: str | None = None):
    full = f"{path}.{key}" if path and key else (path or key)
    if key in d:
        val = d[key]
    elif default_key is not None:
        val = DEFAULTS[default_key][0]
    else:
        raise ConfigError(f"{full}: required")
    if val is None:
        return None
    try:
        if kind == "num":
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise TypeError
            return float(val)
        if kind == "int":
            if isinstance(val, bool) or not isinstance(val, int):
                raise TypeError
            return val
        if kind == "str":
            if not isinstance(val, str):
                raise TypeError
            return val
        if kind == "list":
            if not isinstance(val, list):
                raise TypeError
            return val
        if kind.startswith("vec"):
            n = int(kind[3:])
            if not isinstance(val, list) or len(val) != n or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) for v in val
            ):
                raise TypeError
            return tuple(float(v) for v in val)
    except TypeError:
        raise ConfigError(f"{full}: expected {kind}, got {json.dumps(val)}") from None
    raise AssertionError(kind)


def _positive(val: float, path: str, strict: bool = True) -> float:
    if (strict and not val > 0) or (not strict and val < 0):
        raise ConfigError(f"{path}: must be {'> 0' if strict else '>= 0'}, got {val}")
    return val


def _wrap(path: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{path}: {e}") from None


def _sensor(d: dict, path: str, extra: set[str] = frozenset()) -> SensorSpec:
    _keys(
        d,
        path,
        {"id", "position", "direction_deg", "view_angle_deg", "radius", "p_d_moving", "p_d_static",
         "decay_rate", "decay_shape", "p_false_alarm"} | set(extra),
    )
    kw = {k: _get(d, path, k, "num", f"sensor.{k}") for k in
          ("p_d_moving", "p_d_static", "decay_rate", "decay_shape", "p_false_alarm")}
    radius = _positive(_get(d, path, "radius", "num"), f"{path}.radius")
    return _wrap(
        path,
        SensorSpec.from_degrees,
        _get(d, path, "id", "str"),
        _get(d, path, "position", "vec2"),
        _get(d, path, "direction_deg", "num"),
        _get(d, path, "view_angle_deg", "num"),
        radius,
        **kw,
    )


def parse_config(doc: dict | str) -> Scenario:
    """Validate a scenario document (dict or JSON text) into a Scenario."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as e:
            raise ConfigError(f"<root>: not valid JSON ({e})") from None
    _keys(doc, "", {"room", "grid", "speed_levels", "motion", "lighting", "sensors", "ceiling_sensors",
                    "illumination_sensors", "control", "simulation"})

    room = _keys(doc.get("room"), "room", {"width", "depth", "invalid_regions", "static_zones", "default_static_prob"})
    width = _positive(_get(room, "room", "width", "num"), "room.width")
    depth = _positive(_get(room, "room", "depth", "num"), "room.depth")
    invalid = []
    for k, r in enumerate(_get(room, "room", "invalid_regions", "list", "room.invalid_regions")):
        invalid.append(_get({"": r}, f"room.invalid_regions[{k}]", "", "vec4"))
    zones = []
    for k, z in enumerate(_get(room, "room", "static_zones", "list", "room.static_zones")):
        p = f"room.static_zones[{k}]"
        _keys(z, p, {"rect", "p"})
        zones.append((_get(z, p, "rect", "vec4"), _get(z, p, "p", "num")))
    layout = _wrap(
        "room", RoomLayout, width, depth, tuple(invalid), tuple(zones),
        _get(room, "room", "default_static_prob", "num", "room.default_static_prob"),
    )

    grid_d = _keys(doc.get("grid"), "grid", {"cell_size", "origin"})
    cell = _positive(_get(grid_d, "grid", "cell_size", "num"), "grid.cell_size")
    grid = GridSpec(cell, _get(grid_d, "grid", "origin", "vec2", "grid.origin"))

    speeds = _get(doc, "", "speed_levels", "list", "speed_levels")
    if not speeds or any(isinstance(s, bool) or not isinstance(s, (int, float)) or s < 0 for s in speeds):
        raise ConfigError("speed_levels: expected a nonempty list of speeds >= 0")

    mot = _keys(doc.get("motion", {}), "motion", {"sigma_a", "sigma_v", "dt", "kernel_rel_cutoff"})
    motion = _wrap(
        "motion", MotionParams,
        _get(mot, "motion", "sigma_a", "num", "motion.sigma_a"),
        _get(mot, "motion", "sigma_v", "num", "motion.sigma_v"),
        _get(mot, "motion", "dt", "num", "motion.dt"),
    )
    cutoff = _get(mot, "motion", "kernel_rel_cutoff", "num", "motion.kernel_rel_cutoff")
    if not 0 <= cutoff < 1:
        raise ConfigError("motion.kernel_rel_cutoff: must lie in [0, 1)")

    light = _keys(doc.get("lighting"), "lighting", {"surface_height", "reflection_gain", "c_s", "luminaires"})
    lums = []
    for k, l in enumerate(_get(light, "lighting", "luminaires", "list")):
        p = f"lighting.luminaires[{k}]"
        _keys(l, p, {"id", "position", "f_full", "r", "lambertian_order"})
        lums.append(
            _wrap(
                p, LuminaireSpec,
                _get(l, p, "id", "str"),
                _get(l, p, "position", "vec3"),
                _get(l, p, "f_full", "num"),
                _get(l, p, "r", "num"),
                _get(l, p, "lambertian_order", "num", "luminaire.lambertian_order"),
            )
        )
    lum_ids = [l.id for l in lums]

    sensors = tuple(_sensor(s, f"sensors[{k}]") for k, s in enumerate(_get(doc, "", "sensors", "list")))
    ceiling_docs = _get(doc, "", "ceiling_sensors", "list", "ceiling_sensors")
    ceiling = []
    for k, s in enumerate(ceiling_docs):
        p = f"ceiling_sensors[{k}]"
        spec = _sensor(s, p, {"luminaire"})
        lum = _get(s, p, "luminaire", "str")
        if k >= len(lum_ids) or lum != lum_ids[k]:
            raise ConfigError(f"{p}.luminaire: expected {lum_ids[k] if k < len(lum_ids) else 'no entry'}, got {lum}")
        ceiling.append(spec)
    if ceiling and len(ceiling) != len(lums):
        raise ConfigError(f"ceiling_sensors: {len(ceiling)} entries for {len(lums)} luminaires")

    ill = []
    for k, s in enumerate(_get(doc, "", "illumination_sensors", "list")):
        p = f"illumination_sensors[{k}]"
        _keys(s, p, {"id", "position"})
        ill.append(IlluminationSensorSpec(_get(s, p, "id", "str"), _get(s, p, "position", "vec2")))

    ctl = _keys(doc.get("control", {}), "control", {"controller", "f_min", "th_c", "delay"})
    th_c = _get(ctl, "control", "th_c", "num", "control.th_c")
    if not 0 <= th_c < 1:
        raise ConfigError(f"control.th_c: must lie in [0, 1), got {th_c}")
    controller = _get(ctl, "control", "controller", "str", "control.controller")
    if controller not in CONTROLLERS:
        raise ConfigError(f"control.controller: unknown controller {controller!r}")
    f_min = _positive(_get(ctl, "control", "f_min", "num", "control.f_min"), "control.f_min")
    delay = _positive(_get(ctl, "control", "delay", "num", "control.delay"), "control.delay", strict=False)

    sim = _keys(doc.get("simulation", {}), "simulation", {"duration", "entry", "walk", "environment"})
    duration = _get(sim, "simulation", "duration", "int", "simulation.duration")
    if duration < 1:
        raise ConfigError(f"simulation.duration: must be >= 1, got {duration}")
    entry = _get(sim, "simulation", "entry", "vec2", "simulation.entry")
    env_rows = []
    for k, row in enumerate(_get(sim, "simulation", "environment", "list", "simulation.environment")):
        vals = _get({"": row}, f"simulation.environment[{k}]", "", f"vec{len(ill)}")
        env_rows.append(vals)
    walk = _parse_walk(sim.get("walk", {}))

    return _wrap(
        "<root>",
        Scenario,
        layout=layout,
        grid=grid,
        luminaires=tuple(lums),
        sensors=sensors,
        illumination_sensors=tuple(ill),
        motion=motion,
        walk=walk,
        ceiling_sensors=tuple(ceiling),
        speed_levels=tuple(float(s) for s in speeds),
        surface_height=_get(light, "lighting", "surface_height", "num", "lighting.surface_height"),
        reflection_gain=_positive(
            _get(light, "lighting", "reflection_gain", "num", "lighting.reflection_gain"),
            "lighting.reflection_gain", strict=False,
        ),
        c_s=_positive(_get(light, "lighting", "c_s", "num", "lighting.c_s"), "lighting.c_s", strict=False),
        f_min=f_min,
        th_c=th_c,
        delay=delay,
        controller=controller,
        duration=duration,
        environment=tuple(env_rows),
        kernel_rel_cutoff=cutoff,
        entry=entry,
    )


def _parse_walk(w: dict) -> WalkSpec:
    p = "simulation.walk"
    _keys(w, p, {"mode", "waypoints", "speed", "start", "n_waypoints", "dwell", "route_cell"})
    wps = []
    for k, wp in enumerate(_get(w, p, "waypoints", "list", "walk.waypoints")):
        x, y, dwell = _get({"": wp}, f"{p}.waypoints[{k}]", "", "vec3")
        if dwell < 0 or dwell != int(dwell):
            raise ConfigError(f"{p}.waypoints[{k}]: dwell must be a non-negative integer")
        wps.append((x, y, int(dwell)))
    dwell = _get(w, p, "dwell", "vec2", "walk.dwell")
    speed = _positive(_get(w, p, "speed", "num", "walk.speed"), f"{p}.speed")
    route = _positive(_get(w, p, "route_cell", "num", "walk.route_cell"), f"{p}.route_cell")
    return _wrap(
        p,
        WalkSpec,
        mode=_get(w, p, "mode", "str", "walk.mode"),
        waypoints=tuple(wps),
        speed=speed,
        start=_get(w, p, "start", "vec2", "walk.start"),
        n_waypoints=_get(w, p, "n_waypoints", "int", "walk.n_waypoints"),
        dwell=(int(dwell[0]), int(dwell[1])),
        route_cell=route,
    )


def _sensor_doc(s: SensorSpec) -> dict:
    return {
        "id": s.id,
        "position": list(s.position),
        "direction_deg": round(math.degrees(math.atan2(s.direction[1], s.direction[0])), 9),
        "view_angle_deg": round(math.degrees(s.view_angle), 9),
        "radius": s.radius,
        "p_d_moving": s.p_d_moving,
        "p_d_static": s.p_d_static,
        "decay_rate": s.decay_rate,
        "decay_shape": s.decay_shape,
        "p_false_alarm": s.p_false_alarm,
    }


def scenario_to_dict(sc: Scenario) -> dict:
    """Fully explicit document (every default written out)."""
    w = sc.walk
    return {
        "room": {
            "width": sc.layout.width,
            "depth": sc.layout.depth,
            "invalid_regions": [list(r) for r in sc.layout.invalid_regions],
            "static_zones": [{"rect": list(r), "p": p} for r, p in sc.layout.static_zones],
            "default_static_prob": sc.layout.default_static_prob,
        },
        "grid": {"cell_size": sc.grid.cell_size, "origin": list(sc.grid.origin)},
        "speed_levels": list(sc.speed_levels),
        "motion": {
            "sigma_a": sc.motion.sigma_a,
            "sigma_v": sc.motion.sigma_v,
            "dt": sc.motion.dt,
            "kernel_rel_cutoff": sc.kernel_rel_cutoff,
        },
        "lighting": {
            "surface_height": sc.surface_height,
            "reflection_gain": sc.reflection_gain,
            "c_s": sc.c_s,
            "luminaires": [
                {"id": l.id, "position": list(l.position), "f_full": l.f_full, "r": l.r,
                 "lambertian_order": l.lambertian_order}
                for l in sc.luminaires
            ],
        },
        "sensors": [_sensor_doc(s) for s in sc.sensors],
        "ceiling_sensors": [
            {**_sensor_doc(s), "luminaire": l.id} for s, l in zip(sc.ceiling_sensors, sc.luminaires)
        ],
        "illumination_sensors": [{"id": s.id, "position": list(s.position)} for s in sc.illumination_sensors],
        "control": {"controller": sc.controller, "f_min": sc.f_min, "th_c": sc.th_c, "delay": sc.delay},
        "simulation": {
            "duration": sc.duration,
            "entry": None if sc.entry is None else list(sc.entry),
            "environment": [list(r) for r in sc.environment],
            "walk": {
                "mode": w.mode,
                "waypoints": [list(p) for p in w.waypoints],
                "speed": w.speed,
                "start": None if w.start is None else list(w.start),
                "n_waypoints": w.n_waypoints,
                "dwell": list(w.dwell),
                "route_cell": w.route_cell,
            },
        },
    }


_SCALAR_LIST = re.compile(r"\[\s+([^\[\]{}]*?)\s+\]")


def dumps(sc: Scenario) -> str:
    text = json.dumps(scenario_to_dict(sc), indent=2)
    # keep coordinate lists on one line
    return _SCALAR_LIST.sub(lambda m: "[" + ", ".join(v.strip() for v in m.group(1).split(",")) + "]", text)


def load(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    return parse_config(text)


def default_office_path() -> Path:
    return Path(str(resources.files("occlight") / "data" / "office.json"))


def default_office() -> Scenario:
    """Approximation of the 7-light / 8-sensor pilot office, not its measured geometry."""
    return load(default_office_path())


def equivalent(a: Scenario, b: Scenario, rel: float = 1e-9) -> bool:
    """Scenario equality up to float round-off (sensor headings go through degrees)."""

    def close(x, y) -> bool:
        if isinstance(x, dict) and isinstance(y, dict):
            return x.keys() == y.keys() and all(close(x[k], y[k]) for k in x)
        if isinstance(x, list) and isinstance(y, list):
            return len(x) == len(y) and all(close(u, v) for u, v in zip(x, y))
        if isinstance(x, float) or isinstance(y, float):
            return math.isclose(x, y, rel_tol=rel, abs_tol=rel)
        return x == y

    return close(scenario_to_dict(a), scenario_to_dict(b))


@dataclass(frozen=True)
class RunConfig:
    config: Path
    seed: int = 0
    out: Path = Path("out")
    controllers: tuple[str, ...] = ()
    cell_sizes: tuple[float, ...] = (0.3, 0.6, 0.9)
    runs: int = 10
    th_c: float | None = None
    dump_posterior: bool = False

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned value, got {self.seed}")
        if not str(self.config) or not str(self.out):
            raise ConfigError("config and output paths must be nonempty")
        for c in self.controllers:
            if c not in CONTROLLERS:
                raise ConfigError(f"unknown controller {c!r}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
