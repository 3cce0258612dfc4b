"""Light switching: power-minimizing controllers and the batch/individual baselines."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .lighting import AttenuationField, LuminaireSpec, SystemPowerConfig, illumination_matrix, system_power

DEFAULT_F_MIN = 400.0
MARGIN_LUX = 1.0  # strict "illumination > requirement" realized as >= requirement + margin
DEFAULT_DELAY = 30.0
MAX_EXHAUSTIVE = 20


@dataclass(frozen=True)
class RequirementSpec:
    region: Sequence[int]  # position indices
    f_min: float = DEFAULT_F_MIN
    overrides: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.f_min > 0:
            raise ValueError("f_min must be positive")

    def f_min_at(self, pos: int) -> float:
        return self.overrides.get(pos, self.f_min)


@dataclass(frozen=True, eq=False)
class ControlCommand:
    sw: np.ndarray
    power: float
    feasible: bool = True

    @property
    def n_on(self) -> int:
        return int(np.count_nonzero(self.sw))


def _constraints(
    A: np.ndarray, env: np.ndarray | None, reqs: Sequence[RequirementSpec], margin: float
) -> tuple[np.ndarray, np.ndarray]:
    """Rows G and bounds need so that feasibility is G @ sw >= need."""
    rows, need = [], []
    for req in reqs:
        for p in req.region:
            p = int(p)
            ambient = 0.0 if env is None else float(env[p])
            rows.append(A[p])
            need.append(req.f_min_at(p) - ambient + margin)
    if not rows:
        return np.zeros((0, A.shape[1])), np.zeros(0)
    return np.array(rows), np.array(need)


def _command(lums, sw, cfg, feasible) -> ControlCommand:
    sw = np.asarray(sw, dtype=float)
    return ControlCommand(sw, system_power(lums, sw, cfg), feasible)


def _prepare(lums, fields, env):
    if len(fields) != len(lums):
        raise ValueError(f"{len(fields)} fields for {len(lums)} luminaires")
    A = illumination_matrix(fields, lums)
    if env is not None:
        env = np.asarray(env, dtype=float)
        if env.shape != (A.shape[0],):
            raise ValueError(f"environment illumination has shape {env.shape}, expected ({A.shape[0]},)")
    return A, env


def verify(
    lums: Sequence[LuminaireSpec],
    fields: Sequence[AttenuationField],
    env,
    reqs: Sequence[RequirementSpec],
    sw,
    margin: float = MARGIN_LUX,
    tol: float = 1e-6,
) -> bool:
    """Direct substitution check of every illumination constraint."""
    A, env = _prepare(lums, fields, env)
    G, need = _constraints(A, env, reqs, margin)
    return bool(np.all(G @ np.asarray(sw, dtype=float) >= need - tol))


def optimize_onoff(
    lums: Sequence[LuminaireSpec],
    fields: Sequence[AttenuationField],
    env,
    reqs: Sequence[RequirementSpec],
    cfg: SystemPowerConfig,
    mode: str = "exhaustive",
    margin: float = MARGIN_LUX,
) -> ControlCommand:
    """Cheapest ON/OFF pattern meeting every requirement.

    ``exhaustive`` scans all 2^L patterns in lexicographic order and keeps
    the first of minimum power. ``greedy`` switches on the light with the best
    violation reduction per watt until feasible (ties: lowest index).
    Infeasible problems return all-on with ``feasible=False``.
    """
    A, env = _prepare(lums, fields, env)
    n = len(lums)
    G, need = _constraints(A, env, reqs, margin)
    all_on = np.ones(n)
    if not np.all(G @ all_on >= need):
        return _command(lums, all_on, cfg, False)
    if mode == "exhaustive":
        return _command(lums, _exhaustive(lums, G, need), cfg, True)
    if mode == "greedy":
        return _command(lums, _greedy(lums, G, need), cfg, True)
    raise ValueError(f"unknown mode {mode!r}")


def _exhaustive(lums, G: np.ndarray, need: np.ndarray) -> np.ndarray:
    n = len(lums)
    if n > MAX_EXHAUSTIVE:
        raise ValueError(f"exhaustive search limited to {MAX_EXHAUSTIVE} luminaires, got {n}")
    cost = np.array([l.r * l.f_full for l in lums])
    # bit (n-1-l) of k is sw_l, so increasing k is lexicographic order of sw
    best_k, best_power = None, np.inf
    chunk = 1 << min(n, 14)
    shifts = np.arange(n - 1, -1, -1)
    for start in range(0, 1 << n, chunk):
        ks = np.arange(start, min(start + chunk, 1 << n))
        B = ((ks[:, None] >> shifts) & 1).astype(float)
        ok = np.all(B @ G.T >= need, axis=1) if len(need) else np.ones(len(ks), bool)
        if not ok.any():
            continue
        power = B @ cost
        power[~ok] = np.inf
        j = int(np.argmin(power))
        if power[j] < best_power:
            best_k, best_power = ks[j], power[j]
    return ((best_k >> shifts) & 1).astype(float)


def _greedy(lums, G: np.ndarray, need: np.ndarray) -> np.ndarray:
    n = len(lums)
    cost = np.array([l.r * l.f_full for l in lums])
    sw = np.zeros(n)
    while True:
        level = G @ sw
        violation = np.maximum(need - level, 0.0)
        if not violation.any():
            return sw
        best, best_ratio = None, 0.0
        for l in range(n):
            if sw[l]:
                continue
            reduced = violation.sum() - np.maximum(need - level - G[:, l], 0.0).sum()
            ratio = reduced / cost[l]
            if ratio > best_ratio:
                best, best_ratio = l, ratio
        if best is None:  # unreachable when all-on is feasible
            return np.ones(n)
        sw[best] = 1.0


def optimize_dimmer(
    lums: Sequence[LuminaireSpec],
    fields: Sequence[AttenuationField],
    env,
    reqs: Sequence[RequirementSpec],
    cfg: SystemPowerConfig,
    margin: float = MARGIN_LUX,
) -> ControlCommand:
    """Continuous relaxation solved as an LP; among optimal dimmer vectors the
    lexicographically smallest is returned."""
    A, env = _prepare(lums, fields, env)
    n = len(lums)
    G, need = _constraints(A, env, reqs, margin)
    active = need > 0
    G, need = G[active], need[active]
    if len(need) == 0:
        return _command(lums, np.zeros(n), cfg, True)
    if not np.all(G @ np.ones(n) >= need):
        return _command(lums, np.ones(n), cfg, False)
    cost = np.array([l.r * l.f_full for l in lums])
    bounds = [(0.0, 1.0)] * n
    res = linprog(cost, A_ub=-G, b_ub=-need, bounds=bounds, method="highs")
    if res.status != 0:
        return _command(lums, np.ones(n), cfg, False)
    # lexicographic tie-break over the optimal face
    A_ub = np.vstack([-G, cost])
    b_ub = np.append(-need, res.fun + 1e-9 * max(1.0, abs(res.fun)))
    fixed = list(bounds)
    for l in range(n):
        c = np.zeros(n)
        c[l] = 1.0
        r = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=fixed, method="highs")
        if r.status != 0:
            break
        fixed[l] = (r.x[l], r.x[l])
    sw = np.clip(np.array([b[0] if b[0] == b[1] else res.x[l] for l, b in enumerate(fixed)]), 0.0, 1.0)
    if not np.all(G @ sw >= need - 1e-6):
        sw = np.clip(res.x, 0.0, 1.0)
    return _command(lums, sw, cfg, bool(np.all(G @ sw >= need - 1e-6)))


def batch_control(
    lums: Sequence[LuminaireSpec], cfg: SystemPowerConfig, last_fire: float, now: float, delay: float = DEFAULT_DELAY
) -> ControlCommand:
    """All lights on while any sensor fired within ``delay`` seconds."""
    on = now - last_fire <= delay
    return _command(lums, np.full(len(lums), 1.0 if on else 0.0), cfg, True)


def individual_control(
    lums: Sequence[LuminaireSpec],
    cfg: SystemPowerConfig,
    last_fire: Sequence[float],
    now: float,
    delay: float = DEFAULT_DELAY,
) -> ControlCommand:
    """Light l on while its own paired sensor fired within ``delay`` seconds."""
    if len(last_fire) != len(lums):
        raise ValueError("every luminaire needs exactly one paired sensor")
    sw = np.array([1.0 if now - t <= delay else 0.0 for t in last_fire])
    return _command(lums, sw, cfg, True)


def perfect_localization_control(
    lums: Sequence[LuminaireSpec],
    fields: Sequence[AttenuationField],
    env,
    true_cell: int | None,
    cfg: SystemPowerConfig,
    f_min: float = DEFAULT_F_MIN,
    margin: float = MARGIN_LUX,
) -> ControlCommand:
    """Optimal ON/OFF pattern when the occupant's cell is known exactly."""
    reqs = [] if true_cell is None else [RequirementSpec([true_cell], f_min)]
    return optimize_onoff(lums, fields, env, reqs, cfg, "exhaustive", margin)

