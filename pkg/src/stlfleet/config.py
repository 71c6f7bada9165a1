"""Planner and replanner configuration records."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MisalignmentError


@dataclass
class PlannerConfig:
    c: float = 5.0
    sample_period: float = 0.05
    horizon: float = 60.0
    knot_period: float = 1.0
    v_max: float = 3.0
    a_max: float = 3.0
    max_iterations: int = 500
    tolerance: float = 1e-6
    multistart_count: int = 3
    rng_seed: int = 0
    energy_weight: float = 0.0
    decouple_axes: bool = False

    def validate(self):
        if self.c < 1:
            raise ValueError("c must be >= 1")
        for name in ("sample_period", "horizon", "knot_period", "v_max", "a_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.energy_weight < 0:
            raise ValueError("energy_weight must be >= 0")
        if self.max_iterations < 1 or self.multistart_count < 1:
            raise ValueError("max_iterations and multistart_count must be >= 1")
        for period, name in (
            (self.knot_period, "knot_period"),
            (self.horizon, "horizon"),
        ):
            ratio = period / self.sample_period
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise MisalignmentError(
                    f"{name} must be an integer multiple of sample_period"
                )
        segs = self.horizon / self.knot_period
        if abs(segs - round(segs)) > 1e-9 * max(1.0, segs):
            raise MisalignmentError("horizon must be an integer multiple of knot_period")


@dataclass
class TriggerConfig:
    eta: float = 1.0
    event_period: float = 0.5
    topic_period: float = 5.0

    def validate(self, sample_period: float):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        m = self.event_period / sample_period
        if abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 1:
            raise MisalignmentError("event_period must be a multiple of sample_period")
        n = self.topic_period / self.event_period
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise MisalignmentError("topic_period must be a multiple of event_period")


@dataclass
class Disturbance:
    drone: str
    onset: float
    offset_vector: np.ndarray
    decay: float = 0.0

    def __post_init__(self):
        self.offset_vector = np.asarray(self.offset_vector, dtype=float)
        if self.offset_vector.shape != (3,):
            raise ValueError("offset_vector must be a 3-vector")
        if self.decay < 0:
            raise ValueError("decay must be >= 0")
        if self.onset < 0:
            raise ValueError("onset must be >= 0")


@dataclass
class ReplanSettings:
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    disturbances: list = field(default_factory=list)
