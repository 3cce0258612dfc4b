"""LED power model, attenuation fields and illumination at the working surface."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .env import StateSpace


@dataclass(frozen=True)
class LuminaireSpec:
    id: str
    position: tuple[float, float, float]
    f_full: float
    r: float  # W per luminous unit
    lambertian_order: float = 1.0

    def __post_init__(self):
        if not self.f_full > 0:
            raise ValueError(f"luminaire {self.id}: f_full must be positive")
        if not self.r > 0:
            raise ValueError(f"luminaire {self.id}: r must be positive")
        if self.lambertian_order < 1:
            raise ValueError(f"luminaire {self.id}: lambertian_order must be >= 1")

    @property
    def full_power(self) -> float:
        return self.r * self.f_full


@dataclass(frozen=True)
class AttenuationField:
    luminaire_id: str
    values: np.ndarray  # one h per valid cell, aligned with StateSpace.positions

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError(f"attenuation field {self.luminaire_id}: values must be finite and >= 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class SystemPowerConfig:
    c_s: float = 0.0

    def __post_init__(self):
        if self.c_s < 0:
            raise ValueError("c_s must be >= 0")


@dataclass(frozen=True)
class IlluminationSensorSpec:
    id: str
    position: tuple[float, float]


def lambertian_attenuation(
    lum: LuminaireSpec,
    cell: tuple[float, float],
    surface_height: float,
    reflection_gain: float = 0.0,
) -> float:
    """Line-of-sight gain of a down-facing generalized Lambertian source onto a
    horizontal surface, inflated by ``1 + reflection_gain`` for diffuse bounces."""
    lx, ly, lz = lum.position
    dz = lz - surface_height
    if dz <= 0:
        raise ValueError(f"luminaire {lum.id} is not above the working surface")
    if reflection_gain < 0:
        raise ValueError("reflection_gain must be >= 0")
    d2 = (cell[0] - lx) ** 2 + (cell[1] - ly) ** 2 + dz**2
    cos_phi = dz / math.sqrt(d2)  # emission and incidence angles coincide here
    m = lum.lambertian_order
    h = (m + 1) / (2 * math.pi) * cos_phi**m * cos_phi / d2
    return h * (1.0 + reflection_gain)


def synthetic_field(
    lum: LuminaireSpec, space: StateSpace, surface_height: float, reflection_gain: float = 0.0
) -> AttenuationField:
    vals = [lambertian_attenuation(lum, tuple(p), surface_height, reflection_gain) for p in space.positions]
    return AttenuationField(lum.id, np.array(vals))


def load_measured_attenuation(
    table: Mapping[tuple[int, int], float] | np.ndarray,
    f_measured: float,
    space: StateSpace,
    luminaire_id: str = "",
) -> AttenuationField:
    """h = measured cell illumination / measured emitted illumination.

    ``table`` is keyed by grid cell ``(ix, iy)``, or a 2-D array indexed ``[iy, ix]``.
    """
    if not f_measured > 0:
        raise ValueError("F_measured must be positive")
    vals = np.empty(space.n_positions)
    for k, (ix, iy) in enumerate(space.cells):
        if isinstance(table, np.ndarray):
            if iy >= table.shape[0] or ix >= table.shape[1]:
                raise KeyError(f"measured table has no entry for cell ({ix}, {iy})")
            v = table[iy, ix]
        else:
            try:
                v = table[(int(ix), int(iy))]
            except KeyError:
                raise KeyError(f"measured table has no entry for cell ({ix}, {iy})") from None
        vals[k] = float(v) / f_measured
    return AttenuationField(luminaire_id, vals)


def write_attenuation_csv(fh: io.TextIOBase, field: AttenuationField, space: StateSpace, f_full: float) -> None:
    """Dump a field as the illumination a full-on light produces per cell (row, col, value)."""
    fh.write(f"# luminaire_id: {field.luminaire_id}\n")
    fh.write(f"# F_measured: {f_full!r}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["row", "col", "value"])
    for (ix, iy), h in zip(space.cells, field.values):
        w.writerow([int(iy), int(ix), repr(float(h * f_full))])


def read_attenuation_csv(fh: io.TextIOBase, space: StateSpace) -> AttenuationField:
    meta = {}
    rows = []
    for line in fh:
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif line.strip():
            rows.append(line)
    if "F_measured" not in meta:
        raise ValueError("attenuation CSV is missing the F_measured header")
    reader = csv.DictReader(rows)
    table = {(int(r["col"]), int(r["row"])): float(r["value"]) for r in reader}
    return load_measured_attenuation(table, float(meta["F_measured"]), space, meta.get("luminaire_id", ""))


def illumination_matrix(fields: Sequence[AttenuationField], lums: Sequence[LuminaireSpec]) -> np.ndarray:
    """(P, L) matrix whose column l is F_full^l * h^l; illumination = matrix @ sw."""
    if len(fields) != len(lums):
        raise ValueError(f"{len(fields)} fields for {len(lums)} luminaires")
    if not lums:
        return np.zeros((0, 0))
    return np.column_stack([f.values * l.f_full for f, l in zip(fields, lums)])


def _check_sw(sw, n: int) -> np.ndarray:
    sw = np.asarray(sw, dtype=float)
    if sw.shape != (n,):
        raise ValueError(f"dimmer vector has shape {sw.shape}, expected ({n},)")
    if np.any(sw < 0) or np.any(sw > 1):
        raise ValueError("dimmer levels must lie in [0, 1]")
    return sw


def total_illumination(
    fields: Sequence[AttenuationField], lums: Sequence[LuminaireSpec], sw, cell: int
) -> float:
    """Illumination (lux) at valid-cell index ``cell`` from all luminaires."""
    if len(fields) != len(lums):
        raise ValueError(f"{len(fields)} fields for {len(lums)} luminaires")
    sw = _check_sw(sw, len(lums))
    return float(sum(s * l.f_full * f.values[cell] for s, l, f in zip(sw, lums, fields)))


def nearest_sensor(sensors: Sequence[IlluminationSensorSpec], x: float, y: float) -> int:
    if not sensors:
        raise ValueError("no illumination sensors")
    d2 = [(s.position[0] - x) ** 2 + (s.position[1] - y) ** 2 for s in sensors]
    return int(np.argmin(d2))


def environment_illumination(
    sensors: Sequence[IlluminationSensorSpec],
    readings: Sequence[float],
    fields: Sequence[AttenuationField],
    lums: Sequence[LuminaireSpec],
    sw,
    query: tuple[float, float],
    space: StateSpace,
) -> float:
    """Ambient (non-LED) illumination at ``query``, taken from the nearest illumination sensor."""
    if not sensors:
        raise ValueError("no illumination sensors")
    if len(readings) != len(sensors):
        raise ValueError("readings not aligned with sensors")
    k = nearest_sensor(sensors, *query)
    cell = space.nearest_position_index(*sensors[k].position)
    led = total_illumination(fields, lums, sw, cell)
    return max(0.0, float(readings[k]) - led)


def system_power(lums: Sequence[LuminaireSpec], sw, cfg: SystemPowerConfig) -> float:
    sw = _check_sw(sw, len(lums))
    return cfg.c_s + float(sum(l.r * s * l.f_full for l, s in zip(lums, sw)))
