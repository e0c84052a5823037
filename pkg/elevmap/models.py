# elevmap/models.py
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class SensorVarianceModel:
    """Measurement variance of one sensor, sigma0^2 + range_coefficient * range^2, plus the
    rate at which a cell's variance grows while it is not observed."""

    base_variance: float
    range_coefficient: float = 0.0
    time_rate: float = 0.0

    def __post_init__(self):
        if not self.base_variance > 0:
            raise ValueError(f"base_variance must be positive, got {self.base_variance}")
        if self.range_coefficient < 0 or self.time_rate < 0:
            raise ValueError("range_coefficient and time_rate must be non-negative")

    def measurement_variance(self, ranges) -> np.ndarray:
        return self.base_variance + self.range_coefficient * np.square(ranges)

    @classmethod
    def front_stereo(cls) -> SensorVarianceModel:
        return cls(base_variance=1e-4, range_coefficient=4e-4, time_rate=1e-4)

    @classmethod
    def rear_tof(cls) -> SensorVarianceModel:
        return cls(base_variance=1e-4, range_coefficient=2e-4, time_rate=1e-4)


class CellEstimate(NamedTuple):
    height: float
    variance: float


class IntegrationResult(NamedTuple):
    cells_updated: int
    points_used: int
    points_skipped: int
