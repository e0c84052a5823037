# reward/models.py
from __future__ import annotations

from dataclasses import dataclass, field

from sensorsim.models import DEFAULT_JOINT_POSITIONS

TERMS = (
    'lin_vel_tracking',
    'ang_vel_tracking',
    'feet_air_time',
    'lin_vel_z',
    'ang_vel_xy',
    'joint_position',
    'joint_acceleration',
    'joint_torques',
    'action_rate',
    'collisions',
    'trunk_height',
    'torque_limits',
)

# Go1 motor limits per leg: hip, thigh, calf
GO1_TORQUE_LIMITS = (23.7, 23.7, 35.55) * 4


@dataclass(frozen=True)
class RewardWeights:
    """Term weights and shaping constants.

    Every term is computed as a non-negative magnitude (the tracking kernels lie in (0, 1]); the
    sign of the weight decides whether it rewards or penalizes.
    """

    lin_vel_tracking: float = 1.0
    ang_vel_tracking: float = 0.5
    feet_air_time: float = 3.0
    lin_vel_z: float = -2.0
    ang_vel_xy: float = -0.05
    joint_position: float = -0.1
    joint_acceleration: float = -2.5e-7
    joint_torques: float = -0.0002
    action_rate: float = -0.01
    collisions: float = -1.0
    trunk_height: float = -5.0
    torque_limits: float = -10.0

    tracking_sigma: float = 0.25
    air_time_target: float = 0.25
    negative_scale: float = 0.25
    q_default: tuple = DEFAULT_JOINT_POSITIONS
    trunk_height_default: float = 0.30
    torque_limit: tuple = field(default=GO1_TORQUE_LIMITS)

    def __post_init__(self):
        if not self.tracking_sigma > 0:
            raise ValueError(f"tracking sigma must be positive, got {self.tracking_sigma}")
        if not 0.0 < self.negative_scale <= 1.0:
            raise ValueError(f"negative-total scale must lie in (0, 1], got {self.negative_scale}")
        if len(self.q_default) != 12 or len(self.torque_limit) != 12:
            raise ValueError("q_default and torque_limit need one value per joint")

    def weight(self, term: str) -> float:
        return getattr(self, term)


@dataclass(frozen=True)
class RewardBreakdown:
    values: dict
    contributions: dict
    raw_sum: float
    total: float

    def row(self) -> dict:
        row = {term: self.values[term] for term in TERMS}
        row.update({f'{term}_weighted': self.contributions[term] for term in TERMS})
        row.update(raw_sum=self.raw_sum, total=self.total)
        return row
