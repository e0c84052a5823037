# sensorsim/models.py
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

from scene.models import Pose

LEGS = ('FR', 'FL', 'RR', 'RL')
JOINTS_PER_LEG = 3

# hip, thigh, calf per leg in LEGS order
DEFAULT_JOINT_POSITIONS = (
    -0.1, 0.8, -1.5,
    0.1, 0.8, -1.5,
    -0.1, 1.0, -1.5,
    0.1, 1.0, -1.5,
)


@dataclass(frozen=True)
class RobotState:
    t: float
    position: np.ndarray
    orientation: np.ndarray
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray
    joint_positions: np.ndarray
    joint_velocities: np.ndarray
    foot_contacts: np.ndarray
    foot_air_times: np.ndarray
    joint_accelerations: np.ndarray = field(default_factory=lambda: np.zeros(12))
    touchdown: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=bool))
    last_air_times: np.ndarray = field(default_factory=lambda: np.zeros(4))
    world_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if abs(np.linalg.norm(self.orientation) - 1.0) > 1e-9:
            raise ValueError(f"orientation quaternion is not normalized: {self.orientation}")
        if np.any(np.asarray(self.foot_air_times) < 0):
            raise ValueError("foot air times must be non-negative")
        if np.any(np.asarray(self.foot_air_times)[np.asarray(self.foot_contacts, dtype=bool)] != 0):
            raise ValueError("feet in contact must have zero air time")

    @property
    def pose(self) -> Pose:
        return Pose(self.position, self.orientation)

    @property
    def yaw(self) -> float:
        return float(Rotation.from_quat(self.orientation).as_euler('ZYX')[0])

    @classmethod
    def standing(cls, x=0.0, y=0.0, z=0.30, yaw=0.0, t=0.0) -> RobotState:
        return cls(
            t=t,
            position=np.array([x, y, z], dtype=float),
            orientation=Rotation.from_euler('z', yaw).as_quat(),
            linear_velocity=np.zeros(3),
            angular_velocity=np.zeros(3),
            joint_positions=np.array(DEFAULT_JOINT_POSITIONS),
            joint_velocities=np.zeros(12),
            foot_contacts=np.ones(4, dtype=bool),
            foot_air_times=np.zeros(4),
        )


@dataclass(frozen=True)
class DepthNoise:
    """Range noise sigma(r) = sigma0 + k * r**2 along the ray, plus i.i.d. dropout."""

    sigma0: float = 0.0
    k: float = 0.0
    dropout: float = 0.0

    def __post_init__(self):
        if self.sigma0 < 0 or self.k < 0 or not 0.0 <= self.dropout <= 1.0:
            raise ValueError(f"invalid depth noise {self}")

    def sigma(self, ranges: np.ndarray) -> np.ndarray:
        return self.sigma0 + self.k * np.square(ranges)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole depth camera. The sensor frame looks along +x with y left and z up."""

    name: str
    mount_translation: tuple = (0.0, 0.0, 0.0)
    mount_rpy: tuple = (0.0, 0.0, 0.0)
    hfov: float = math.radians(87.0)
    vfov: float = math.radians(58.0)
    width: int = 64
    height: int = 40
    min_range: float = 0.1
    max_range: float = 3.0
    rate: float = 30.0
    noise: DepthNoise = field(default_factory=DepthNoise)

    def __post_init__(self):
        if not (0.0 < self.hfov < math.pi and 0.0 < self.vfov < math.pi):
            raise ValueError(f"camera {self.name}: field of view must lie in (0, pi)")
        if not 0.0 <= self.min_range < self.max_range:
            raise ValueError(f"camera {self.name}: min_range must be below max_range")
        if self.rate <= 0 or self.width < 1 or self.height < 1:
            raise ValueError(f"camera {self.name}: rate and resolution must be positive")

    @property
    def mount_pose(self) -> Pose:
        return Pose.from_rotation(self.mount_translation, Rotation.from_euler('xyz', self.mount_rpy))

    @cached_property
    def ray_directions(self) -> np.ndarray:
        """Unit ray per pixel in the sensor frame, row-major from the top-left pixel."""
        fx = (self.width / 2.0) / math.tan(self.hfov / 2.0)
        fy = (self.height / 2.0) / math.tan(self.vfov / 2.0)
        u = (np.arange(self.width) + 0.5 - self.width / 2.0) / fx
        v = (np.arange(self.height) + 0.5 - self.height / 2.0) / fy
        uu, vv = np.meshgrid(u, v)
        rays = np.column_stack([np.ones(uu.size), -uu.ravel(), -vv.ravel()])
        rays /= np.linalg.norm(rays, axis=1, keepdims=True)
        rays.setflags(write=False)
        return rays

    @classmethod
    def front_stereo(cls, **overrides) -> CameraModel:
        """Nose camera pitched 60 degrees down, stereo-like noise growing with range squared."""
        values = dict(name='front', mount_translation=(0.27, 0.0, 0.0), mount_rpy=(0.0, math.radians(60.0), 0.0),
                      hfov=math.radians(87.0), vfov=math.radians(58.0), width=64, height=40,
                      min_range=0.1, max_range=3.0, noise=DepthNoise(sigma0=0.002, k=0.005, dropout=0.02))
        values.update(overrides)
        return cls(**values)

    @classmethod
    def rear_tof(cls, **overrides) -> CameraModel:
        """Tail time-of-flight camera under the trunk, aimed forward-down at the area beneath the robot."""
        values = dict(name='rear', mount_translation=(-0.25, 0.0, -0.05), mount_rpy=(0.0, math.radians(55.0), 0.0),
                      hfov=math.radians(56.0), vfov=math.radians(44.0), width=48, height=36,
                      min_range=0.1, max_range=4.0, noise=DepthNoise(sigma0=0.003, k=0.002, dropout=0.01))
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class CommandSegment:
    vx: float
    vy: float
    wz: float
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"command segment duration must be positive, got {self.duration}")

    @property
    def command(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.wz])


@dataclass(frozen=True)
class CommandProfile:
    """Piecewise-constant (v_x, v_y, w_z) commands; zero after the last segment."""

    segments: tuple

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def boundaries(self) -> list:
        """(start, end, segment) per segment."""
        out, start = [], 0.0
        for segment in self.segments:
            out.append((start, start + segment.duration, segment))
            start += segment.duration
        return out

    def command_at(self, t: float) -> np.ndarray:
        # sample times are k * dt; tolerate rounding at the boundaries
        for start, end, segment in self.boundaries():
            if start - 1e-9 <= t < end - 1e-9:
                return segment.command
        return np.zeros(3)


@dataclass(frozen=True)
class GaitParams:
    """Parametric trot driving the joints, plus the kinematic base response."""

    frequency: float = 2.0
    thigh_amplitude: float = 0.3
    calf_amplitude: float = 0.5
    trunk_height: float = 0.30
    height_time_constant: float = 0.05
    pitch_time_constant: float = 0.1
    velocity_time_constant: float = 0.0
    sway_amplitude: float = 0.0
    phase_jitter: float = 0.0
    q_default: tuple = DEFAULT_JOINT_POSITIONS
    kp: float = 20.0
    kd: float = 0.5
    action_scale: float = 0.25

    def __post_init__(self):
        if self.frequency <= 0 or self.trunk_height <= 0:
            raise ValueError("gait frequency and trunk height must be positive")
        if min(self.height_time_constant, self.pitch_time_constant, self.velocity_time_constant) < 0:
            raise ValueError("time constants must be non-negative")
        if len(self.q_default) != 12:
            raise ValueError("q_default needs 12 joint positions")


@dataclass
class Trajectory:
    states: list
    truncated: bool = False

    def __iter__(self):
        return iter(self.states)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, index):
        return self.states[index]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])
