"""Recursive maximum-likelihood tracking of one occupant on the discrete state space."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import StateSpace, StateVector
from .motion import TransitionKernel
from .sensing import MeasurementVector, SensorSpec, coverage_matrix, detect_prob

DEFAULT_TH_C = 0.05


@dataclass(frozen=True, eq=False)
class LikelihoodField:
    values: np.ndarray
    t: int = 0
    reinitialized: bool = False  # set when the step fell back to measurement-only


@dataclass(frozen=True)
class LocalizationResult:
    mle_index: int
    mle_state: StateVector
    candidates: np.ndarray  # position indices
    peak_value: float


def reset(space: StateSpace) -> LikelihoodField:
    m = len(space)
    return LikelihoodField(np.full(m, 1.0 / m), 0)


def reset_at(space: StateSpace, x: float, y: float) -> LikelihoodField:
    """All mass on the resting state of the cell holding (x, y), e.g. a known entrance."""
    values = np.zeros(len(space))
    values[space.index_of(space.nearest_position_index(x, y))] = 1.0
    return LikelihoodField(values, 0)


def measurement_likelihood(
    sensors: Sequence[SensorSpec], coverage: np.ndarray, bits: Sequence[int], moving: bool
) -> np.ndarray:
    """Pr(b_t | user at each position), sensors conditionally independent. Shape (P,)."""
    lik = np.ones(coverage.shape[0])
    for k, (s, b) in enumerate(zip(sensors, bits)):
        p1 = detect_prob(s, coverage[:, k], moving)
        lik *= p1 if b else 1.0 - p1
    return lik


def update(
    field: LikelihoodField,
    kernel: TransitionKernel,
    sensors: Sequence[SensorSpec],
    b_t: MeasurementVector,
    space: StateSpace,
    coverage: np.ndarray | None = None,
) -> LikelihoodField:
    """One recursion step.

    A state reached by staying put is scored with the static detection
    probabilities, a state reached from any other state with the moving ones.
    Pass a precomputed ``coverage`` (from ``coverage_matrix``) in loops.
    """
    if len(b_t.bits) != len(sensors):
        raise ValueError(f"{len(b_t.bits)} bits for {len(sensors)} sensors")
    if coverage is None:
        coverage = coverage_matrix(sensors, space.positions)
    pos = space.state_position_index
    lik_static = measurement_likelihood(sensors, coverage, b_t.bits, moving=False)[pos]
    lik_moving = measurement_likelihood(sensors, coverage, b_t.bits, moving=True)[pos]

    prior = field.values
    stay = kernel.diagonal() * prior
    arrive = kernel.moving_part.T @ prior
    new = lik_static * stay + lik_moving * arrive
    total = new.sum()
    if total > 0:
        return LikelihoodField(new / total, field.t + 1)
    # no state explains b_t given the history
    total = lik_moving.sum()
    if total > 0:
        return LikelihoodField(lik_moving / total, field.t + 1, reinitialized=True)
    m = len(prior)
    return LikelihoodField(np.full(m, 1.0 / m), field.t + 1, reinitialized=True)


def position_marginal(field: LikelihoodField, space: StateSpace) -> np.ndarray:
    return field.values.reshape(space.n_positions, space.n_velocities).sum(axis=1)


def estimate(field: LikelihoodField, space: StateSpace) -> tuple[int, StateVector]:
    """Most likely state; np.argmax already returns the lowest index on ties."""
    i = int(np.argmax(field.values))
    return i, space.state(i)


def candidate_set(field: LikelihoodField, space: StateSpace, th_c: float = DEFAULT_TH_C) -> np.ndarray:
    """Position indices whose marginal likelihood exceeds ``th_c``; never empty."""
    if not 0.0 <= th_c < 1.0:
        raise ValueError("th_c must lie in [0, 1)")
    marg = position_marginal(field, space)
    idx = np.flatnonzero(marg > th_c)
    if len(idx) == 0:
        i, _ = estimate(field, space)
        idx = np.array([i // space.n_velocities])
    return idx


def localize(field: LikelihoodField, space: StateSpace, th_c: float = DEFAULT_TH_C) -> LocalizationResult:
    i, s = estimate(field, space)
    return LocalizationResult(i, s, candidate_set(field, space, th_c), float(field.values[i]))


class Tracker:
    """Holds the per-run likelihood field and the precomputed sensor coverage."""

    def __init__(
        self,
        space: StateSpace,
        kernel: TransitionKernel,
        sensors: Sequence[SensorSpec],
        th_c: float = DEFAULT_TH_C,
        entry: tuple[float, float] | None = None,
    ):
        self.space = space
        self.kernel = kernel
        self.sensors = list(sensors)
        self.th_c = th_c
        self.coverage = coverage_matrix(self.sensors, space.positions)
        self.field = reset(space) if entry is None else reset_at(space, *entry)

    def step(self, b_t: MeasurementVector) -> LocalizationResult:
        self.field = update(self.field, self.kernel, self.sensors, b_t, self.space, self.coverage)
        return localize(self.field, self.space, self.th_c)
