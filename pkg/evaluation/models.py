# evaluation/models.py
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class TrajectorySample(NamedTuple):
    t: float
    position: np.ndarray
    orientation: np.ndarray


class ChamferResult(NamedTuple):
    """One-way distance in centimeters; ``empty_source`` marks a source cloud without points."""

    cm: float
    empty_source: bool = False


class TrackingRms(NamedTuple):
    vx: float
    vy: float
    wz: float
    samples: int
    skipped_segments: int


@dataclass
class MetricReport:
    """Per-window values of one metric under one configuration.

    ``label`` tells apart reports of the same metric within a run (a step height, a speed);
    ``tags`` name the configuration (sensors, odometry mode). ``missing`` counts windows that
    had no data and are left out of the mean.
    """

    metric: str
    units: str
    values: list = field(default_factory=list)
    label: str = ''
    tags: dict = field(default_factory=dict)
    missing: int = 0

    @property
    def key(self) -> str:
        return f'{self.metric}[{self.label}]' if self.label else self.metric

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values else math.nan

    def add(self, value) -> None:
        if value is None:
            self.missing += 1
        else:
            self.values.append(float(value))

    def row(self) -> dict:
        return {'metric': self.metric, 'label': self.label, **self.tags, 'mean': self.mean, 'units': self.units,
                'windows': len(self.values), 'missing': self.missing}
