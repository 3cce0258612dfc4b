"""Switching static/moving occupant motion: generative sampler and discrete transition kernel."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import gaussian_filter

from .env import RoomLayout, StateSpace, StateVector, is_valid_position, static_mode_prob

log = logging.getLogger(__name__)

DEFAULT_REL_CUTOFF = 1e-6
MAX_RETRIES = 20
_JITTER = 1e-12
_CHUNK = 256


@dataclass(frozen=True)
class MotionParams:
    sigma_a: float = 0.5  # m/s^2
    sigma_v: float = 0.2  # m/s, position deviation std is sigma_v * dt
    dt: float = 1.0  # s

    def __post_init__(self):
        if self.sigma_a < 0 or self.sigma_v < 0:
            raise ValueError("sigma_a and sigma_v must be >= 0")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def axis_covariance(self) -> np.ndarray:
        """Covariance of one axis' (position, velocity) increment."""
        a2, v2, dt = self.sigma_a**2, self.sigma_v**2, self.dt
        return np.array(
            [
                [v2 * dt**2 + a2 * dt**4 / 4, a2 * dt**3 / 2],
                [a2 * dt**3 / 2, a2 * dt**2],
            ]
        )

    def covariance(self) -> np.ndarray:
        """Full 4x4 covariance over [x, y, vx, vy]; symmetric by construction."""
        c = self.axis_covariance()
        cov = np.zeros((4, 4))
        for axis in (0, 1):
            idx = [axis, axis + 2]
            cov[np.ix_(idx, idx)] = c
        return cov


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Row-stochastic sparse matrix, ``matrix[i, j] = Pr(u_t = s_j | u_{t-1} = s_i)``."""

    matrix: sp.csr_matrix

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    @cached_property
    def moving_part(self) -> sp.csr_matrix:
        """The kernel with its diagonal removed."""
        off = self.matrix - sp.diags(self.matrix.diagonal())
        off.eliminate_zeros()
        return off.tocsr()

    def row(self, i: int) -> np.ndarray:
        return self.matrix.getrow(i).toarray().ravel()

    def predict(self, prior: np.ndarray) -> np.ndarray:
        """sum_j prior[j] * T[j, i] for every destination i."""
        return self.matrix.T @ prior

    def write_csv(self, fh: io.TextIOBase) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "T_ij"])
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            w.writerow([int(i), int(j), repr(float(v))])


def _snap_table(velocities: np.ndarray, sigma: float, reach: float):
    """P(snap(m + e) = j) for e ~ N(0, sigma^2 I), tabulated over velocity means m.

    Returns (table[j, iy, ix], lo, step); look up with the nearest grid node.
    """
    step = 0.02 if sigma == 0 else min(0.02, sigma / 4)
    half = np.abs(velocities).max() + reach + 4 * sigma + step
    axis = np.arange(-half, half + step / 2, step)
    gx, gy = np.meshgrid(axis, axis)
    d2 = (gx[..., None] - velocities[:, 0]) ** 2 + (gy[..., None] - velocities[:, 1]) ** 2
    label = np.argmin(d2, axis=-1)
    table = np.empty((len(velocities), len(axis), len(axis)))
    for j in range(len(velocities)):
        ind = (label == j).astype(float)
        table[j] = gaussian_filter(ind, sigma / step, mode="nearest") if sigma > 0 else ind
    return table, -half, step


def build_transition_kernel(
    space: StateSpace,
    layout: RoomLayout,
    params: MotionParams,
    rel_cutoff: float = DEFAULT_REL_CUTOFF,
) -> TransitionKernel:
    """Discretize the switching motion model over ``space``.

    The moving-mode weight of destination (p, v_j) is the Gaussian position
    density around the constant-velocity prediction evaluated at cell p, times
    the probability that the new velocity, conditioned on landing at p, snaps
    to v_j. This is the discrete image of ``sample_next_state``. Entries below
    ``rel_cutoff`` times the row maximum are dropped before normalizing.
    """
    m = len(space)
    if m == 0:
        raise ValueError("empty state space")
    states = space.states
    p_static = space.static_probs()
    pos = space.positions
    n_pos, n_vel = space.n_positions, space.n_velocities
    valid_pos = np.array([is_valid_position(layout, x, y) for x, y in pos])

    c = params.axis_covariance() + _JITTER * np.eye(2)
    var_x = c[0, 0]
    gain = c[0, 1] / var_x  # E[dv | dx] = gain * dx
    cond_sd = float(np.sqrt(max(c[1, 1] - c[0, 1] ** 2 / var_x, 0.0)))
    dt = params.dt
    # positions further than this from the prediction fall below any cutoff we use
    reach_x = np.sqrt(2 * var_x * max(-np.log(max(rel_cutoff, 1e-300)), 1.0)) + space_step(pos)
    table, lo, step = _snap_table(space.velocities, cond_sd, abs(gain) * reach_x)
    n_tab = table.shape[1]

    rows, cols, vals = [], [], []
    isolated = 0
    for start in range(0, m, _CHUNK):
        src = states[start : start + _CHUNK]
        n = len(src)
        dx = pos[None, :, 0] - (src[:, 0] + src[:, 2] * dt)[:, None]
        dy = pos[None, :, 1] - (src[:, 1] + src[:, 3] * dt)[:, None]
        log_pos = -0.5 * (dx**2 + dy**2) / var_x  # (n, P)
        log_pos[:, ~valid_pos] = -np.inf
        mx = src[:, 2, None] + gain * dx
        my = src[:, 3, None] + gain * dy
        ix = np.clip(np.rint((mx - lo) / step).astype(int), 0, n_tab - 1)
        iy = np.clip(np.rint((my - lo) / step).astype(int), 0, n_tab - 1)
        vel_w = table[:, iy, ix]  # (V, n, P)
        w_all = np.exp(log_pos - log_pos.max(axis=1, keepdims=True))[None] * vel_w
        w_all = np.moveaxis(w_all, 0, 2).reshape(n, n_pos * n_vel)  # state index p*V + v
        w_all[np.arange(n), np.arange(start, start + n)] = 0.0
        for r in range(n):
            i = start + r
            ps = p_static[i]
            moving = 1.0 - ps
            w = w_all[r]
            top = w.max()
            if moving > 0 and top > 0:
                keep = np.flatnonzero(w >= rel_cutoff * top)
                w = w[keep]
                rows.append(np.full(len(keep), i))
                cols.append(keep)
                vals.append(moving * w / w.sum())
                self_p = ps
            else:
                if moving > 0:
                    isolated += 1
                self_p = 1.0
            if self_p > 0:
                rows.append(np.array([i]))
                cols.append(np.array([i]))
                vals.append(np.array([self_p]))
    if isolated:
        log.warning("%d isolated states given self-transition probability 1", isolated)
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
    )
    mat.sort_indices()
    return TransitionKernel(mat)


def space_step(pos: np.ndarray) -> float:
    """Largest gap between neighbouring cell centres along x (0 for one column)."""
    xs = np.unique(pos[:, 0])
    return float(np.diff(xs).max()) if len(xs) > 1 else 0.0


def snap_velocity(vx: float, vy: float, velocities: np.ndarray) -> tuple[float, float]:
    d2 = ((velocities - (vx, vy)) ** 2).sum(axis=1)
    v = velocities[int(np.argmin(d2))]
    return float(v[0]), float(v[1])


def sample_next_state(
    s: StateVector,
    params: MotionParams,
    layout: RoomLayout,
    rng: np.random.Generator,
    velocities: np.ndarray | None = None,
    max_retries: int = MAX_RETRIES,
) -> StateVector:
    """Draw the occupant's next continuous state.

    With ``velocities`` given, the new velocity is snapped to the nearest
    member so the static mode (exact zero velocity) is reachable.
    """
    if rng.random() < static_mode_prob(layout, s):
        return s
    dt = params.dt
    for _ in range(max_retries):
        a = rng.normal(0.0, params.sigma_a, 2)
        n = rng.normal(0.0, params.sigma_v * dt, 2)
        x = s.x + s.vx * dt + a[0] * dt**2 / 2 + n[0]
        y = s.y + s.vy * dt + a[1] * dt**2 / 2 + n[1]
        vx, vy = s.vx + a[0] * dt, s.vy + a[1] * dt
        if velocities is not None:
            vx, vy = snap_velocity(vx, vy, velocities)
        if is_valid_position(layout, x, y):
            return StateVector(x, y, vx, vy)
    return StateVector(s.x, s.y, -s.vx + 0.0, -s.vy + 0.0)
