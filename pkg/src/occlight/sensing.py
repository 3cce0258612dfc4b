"""Directional binary infrared sensors: fan coverage, detection likelihood, measurement draws."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import StateVector


@dataclass(frozen=True)
class SensorSpec:
    id: str
    position: tuple[float, float]
    direction: tuple[float, float]  # unit boresight vector
    view_angle: float  # radians, full fan width
    radius: float
    p_d_moving: float = 0.8
    p_d_static: float = 0.1
    decay_rate: float = 4.0
    decay_shape: float = 2.0
    p_false_alarm: float = 0.0

    def __post_init__(self):
        for name in ("p_d_moving", "p_d_static", "p_false_alarm"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"sensor {self.id}: {name}={v} outside [0, 1]")
        if not 0 < self.view_angle <= 2 * math.pi + 1e-12:
            raise ValueError(f"sensor {self.id}: view_angle must be in (0, 2*pi]")
        if not self.radius > 0:
            raise ValueError(f"sensor {self.id}: radius must be positive")
        if self.decay_rate < 0 or not self.decay_shape > 0:
            raise ValueError(f"sensor {self.id}: need decay_rate >= 0 and decay_shape > 0")
        if abs(math.hypot(*self.direction) - 1.0) > 1e-9:
            raise ValueError(f"sensor {self.id}: direction must be a unit vector")

    @classmethod
    def from_degrees(cls, id: str, position, direction_deg: float, view_angle_deg: float, radius: float, **kw):
        th = math.radians(direction_deg)
        return cls(
            id=id,
            position=tuple(position),
            direction=(math.cos(th), math.sin(th)),
            view_angle=math.radians(view_angle_deg),
            radius=radius,
            **kw,
        )


@dataclass(frozen=True)
class MeasurementVector:
    t: int
    bits: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("measurement bits must be 0 or 1")


def coverage_factor(sensor: SensorSpec, pos: tuple[float, float]) -> float:
    dx = pos[0] - sensor.position[0]
    dy = pos[1] - sensor.position[1]
    d = math.hypot(dx, dy)
    if d > 0:
        cos_a = (dx * sensor.direction[0] + dy * sensor.direction[1]) / d
        angle = math.acos(max(-1.0, min(1.0, cos_a)))
        if angle > sensor.view_angle / 2 + 1e-12:
            return 0.0
    if d <= sensor.radius:
        return 1.0
    return math.exp(-sensor.decay_rate * (d - sensor.radius) ** sensor.decay_shape)


def coverage_matrix(sensors: Sequence[SensorSpec], positions: np.ndarray) -> np.ndarray:
    """(P, K) coverage factors for every position and sensor."""
    return np.array([[coverage_factor(s, tuple(p)) for s in sensors] for p in positions]).reshape(
        len(positions), len(sensors)
    )


def detect_prob(sensor: SensorSpec, c: float | np.ndarray, moving: bool):
    """Pr(b = 1) given coverage ``c``; false alarms fire independently of detection."""
    pd = sensor.p_d_moving if moving else sensor.p_d_static
    hit = pd * c
    if sensor.p_false_alarm == 0.0:
        return hit
    return 1.0 - (1.0 - hit) * (1.0 - sensor.p_false_alarm)


def detection_likelihood(sensor: SensorSpec, pos: tuple[float, float], moving: bool, b: int) -> float:
    p1 = detect_prob(sensor, coverage_factor(sensor, pos), moving)
    return p1 if b == 1 else 1.0 - p1


def sample_measurements(
    sensors: Sequence[SensorSpec],
    true_state_prev: StateVector,
    true_state: StateVector,
    rng: np.random.Generator,
    t: int = 0,
) -> MeasurementVector:
    moving = true_state.position != true_state_prev.position
    p1 = np.array([detect_prob(s, coverage_factor(s, true_state.position), moving) for s in sensors])
    u = rng.random(len(sensors))
    return MeasurementVector(t, tuple(int(b) for b in (u < p1)))
