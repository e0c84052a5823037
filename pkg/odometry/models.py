# odometry/models.py
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.spatial.transform import Rotation, Slerp

from scene.models import Pose

ODOMETRY_MODES = ('gt', 'ekf-vio', 'ekf-novio', 'vio')


@dataclass(frozen=True)
class EstimatorNoise:
    """Velocity estimator error: a run-constant bias plus white noise, both body frame."""

    sigma: tuple = (0.05, 0.05, 0.02)
    bias: tuple = (0.03, 0.015, 0.0)


@dataclass(frozen=True)
class ImuNoise:
    orientation_sigma: float = 0.002
    angular_velocity_sigma: float = 0.01


@dataclass(frozen=True)
class VioNoise:
    """Position drift as an integrated random walk plus per-sample noise.

    ``dropouts`` are closed (start, end) intervals in seconds without VIO output.
    """

    random_walk: float = 0.02
    sigma: float = 0.005
    dropouts: tuple = ()


@dataclass(frozen=True)
class SourceErrorModel:
    estimator: EstimatorNoise = field(default_factory=EstimatorNoise)
    imu: ImuNoise = field(default_factory=ImuNoise)
    vio: VioNoise = field(default_factory=VioNoise)

    def __post_init__(self):
        sigmas = [*self.estimator.sigma, self.imu.orientation_sigma, self.imu.angular_velocity_sigma,
                  self.vio.random_walk, self.vio.sigma]
        if min(sigmas) < 0:
            raise ValueError("source noise sigmas must be non-negative")
        for start, end in self.vio.dropouts:
            if end < start:
                raise ValueError(f"VIO dropout ends before it starts: ({start}, {end})")

    @classmethod
    def noiseless(cls) -> SourceErrorModel:
        return cls(estimator=EstimatorNoise(sigma=(0.0, 0.0, 0.0), bias=(0.0, 0.0, 0.0)),
                   imu=ImuNoise(0.0, 0.0), vio=VioNoise(0.0, 0.0))


@dataclass(frozen=True)
class VelocitySample:
    t: float
    velocity: np.ndarray


@dataclass(frozen=True)
class ImuSample:
    t: float
    orientation: np.ndarray
    angular_velocity: np.ndarray


@dataclass(frozen=True)
class PoseSample:
    t: float
    position: np.ndarray


@dataclass
class SourceStreams:
    estimator: list
    imu: list
    vio: list


@dataclass(frozen=True)
class EkfParams:
    """Noise densities and measurement noise of the fusion filter."""

    position_noise: float = 1e-6
    velocity_noise: float = 0.5
    velocity_sigma: tuple = (0.05, 0.05, 0.05)
    position_sigma: tuple = (0.02, 0.02, 0.02)
    attitude_sigma: float = 0.002
    gate: float = 9.0

    def __post_init__(self):
        if self.position_noise < 0 or self.velocity_noise < 0 or self.attitude_sigma < 0:
            raise ValueError("process noise must be non-negative")
        if min(self.velocity_sigma) <= 0 or min(self.position_sigma) <= 0 or self.gate <= 0:
            raise ValueError("measurement sigmas and the gate must be positive")


@dataclass(frozen=True)
class EkfState:
    """Position and velocity in the world frame, orientation as an (x, y, z, w) quaternion and a
    9x9 covariance over position, velocity and attitude error."""

    t: float
    position: np.ndarray
    velocity: np.ndarray
    orientation: np.ndarray
    covariance: np.ndarray
    rejected_velocity: int = 0
    rejected_pose: int = 0

    def __post_init__(self):
        if np.shape(self.covariance) != (9, 9):
            raise ValueError(f"covariance must be 9x9, got {np.shape(self.covariance)}")
        if abs(np.linalg.norm(self.orientation) - 1.0) > 1e-9:
            raise ValueError("orientation quaternion is not normalized")

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.orientation)

    @property
    def pose(self) -> Pose:
        return Pose(self.position, self.orientation)


class OdometryTrack:
    """Time-stamped pose and world velocity estimates with interpolated lookup."""

    def __init__(self, times, positions, orientations, velocities):
        self.times = np.asarray(times, dtype=float)
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        self.orientations = np.asarray(orientations, dtype=float).reshape(-1, 4)
        self.velocities = np.asarray(velocities, dtype=float).reshape(-1, 3)
        if not len(self.times):
            raise ValueError("odometry track is empty")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("odometry track times must increase strictly")
        if not len(self.times) == len(self.positions) == len(self.orientations) == len(self.velocities):
            raise ValueError("odometry track columns differ in length")

    def __len__(self):
        return len(self.times)

    @classmethod
    def from_trajectory(cls, trajectory) -> OdometryTrack:
        states = list(trajectory)
        return cls(
            times=[s.t for s in states],
            positions=[s.position for s in states],
            orientations=[s.orientation for s in states],
            velocities=[s.world_velocity for s in states],
        )

    def positions_at(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return np.column_stack([np.interp(times, self.times, self.positions[:, axis]) for axis in range(3)])

    def rotations_at(self, times) -> Rotation:
        rotations = Rotation.from_quat(self.orientations)
        if len(self.times) == 1:
            return Rotation.from_quat(np.repeat(self.orientations, np.size(times), axis=0))
        clipped = np.clip(np.asarray(times, dtype=float), self.times[0], self.times[-1])
        return Slerp(self.times, rotations)(clipped)

    def pose_at(self, t: float) -> Pose:
        """Pose at ``t``, held constant outside the covered interval."""
        return Pose.from_rotation(self.positions_at([t])[0], self.rotations_at([t])[0])

    def with_z_drift(self, rate: float) -> OdometryTrack:
        """Copy with ``rate * (t - t0)`` added to z, an injected vertical drift."""
        if rate == 0.0:
            return self
        positions = self.positions.copy()
        positions[:, 2] += rate * (self.times - self.times[0])
        velocities = self.velocities.copy()
        velocities[:, 2] += rate
        return OdometryTrack(self.times, positions, self.orientations, velocities)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(np.column_stack([self.times, self.positions, self.orientations, self.velocities]),
                             columns=['t', 'x', 'y', 'z', 'qx', 'qy', 'qz', 'qw', 'vx', 'vy', 'vz'])
        frame.to_csv(path, index=False, float_format='%.9g')
        return path

    @classmethod
    def from_csv(cls, path) -> OdometryTrack:
        frame = pd.read_csv(path)
        return cls(
            times=frame['t'].to_numpy(),
            positions=frame[['x', 'y', 'z']].to_numpy(),
            orientations=frame[['qx', 'qy', 'qz', 'qw']].to_numpy(),
            velocities=frame[['vx', 'vy', 'vz']].to_numpy(),
        )
