# obsbuilder/models.py
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.transform import Rotation

# 11 x 7 samples at 0.05 m covering 0.5 m forward by 0.3 m sideways
HEIGHT_GRID = (11, 7)
HEIGHT_PITCH = 0.05
HEIGHT_SAMPLES = HEIGHT_GRID[0] * HEIGHT_GRID[1]
FRAME_LENGTH = 3 + 12 + 12 + 3 + HEIGHT_SAMPLES
HISTORY_LENGTH = 10
TARGETS_LENGTH = 3 + 1 + 4


def _vector(value, length, name):
    array = np.array(value, dtype=float).reshape(-1)
    if array.shape != (length,):
        raise ValueError(f"{name} needs {length} values, got {array.size}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ObservationFrame:
    """Per-tick policy observation; heights are relative to the base."""

    command: np.ndarray
    joint_positions: np.ndarray
    joint_velocities: np.ndarray
    projected_gravity: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        for name, length in (('command', 3), ('joint_positions', 12), ('joint_velocities', 12),
                             ('projected_gravity', 3), ('heights', HEIGHT_SAMPLES)):
            object.__setattr__(self, name, _vector(getattr(self, name), length, name))
        if abs(np.linalg.norm(self.projected_gravity) - 1.0) > 1e-6:
            raise ValueError(f"projected gravity must be a unit vector, got {self.projected_gravity}")

    @classmethod
    def from_state(cls, state, command, heights) -> ObservationFrame:
        gravity = Rotation.from_quat(state.orientation).inv().apply([0.0, 0.0, -1.0])
        return cls(command=command, joint_positions=state.joint_positions,
                   joint_velocities=state.joint_velocities, projected_gravity=gravity, heights=heights)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.command, self.joint_positions, self.joint_velocities,
                               self.projected_gravity, self.heights])


@dataclass
class HeightNoiseState:
    """Per-sample Gaussian noise plus an x, y, z bias that is redrawn every ``period`` seconds."""

    sample_sigma: float = 0.01
    bias_sigma: tuple = (0.05, 0.05, 0.05)
    period: float = 7.0
    bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    last_resample: float = -math.inf

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"bias resample period must be positive, got {self.period}")
        if self.sample_sigma < 0 or min(self.bias_sigma) < 0:
            raise ValueError("height noise sigmas must be non-negative")
        self.bias = np.array(self.bias, dtype=float).reshape(3)

    def due(self, t: float) -> bool:
        return t - self.last_resample >= self.period - 1e-9


@dataclass(frozen=True)
class EstimationTargets:
    linear_velocity: np.ndarray
    friction: float
    contacts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'linear_velocity', _vector(self.linear_velocity, 3, 'linear_velocity'))
        contacts = np.asarray(self.contacts)
        if contacts.shape != (4,) or contacts.dtype != bool:
            raise ValueError(f"contacts must be 4 booleans, got {contacts!r}")
        object.__setattr__(self, 'contacts', contacts.copy())

    @classmethod
    def from_state(cls, state, friction: float = 1.0) -> EstimationTargets:
        return cls(linear_velocity=state.linear_velocity, friction=friction,
                   contacts=np.asarray(state.foot_contacts, dtype=bool))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.linear_velocity, [self.friction], self.contacts.astype(float)])


class HistoryBuffer:
    """The last ``capacity`` frames, flattened oldest first."""

    def __init__(self, capacity: int = HISTORY_LENGTH):
        if capacity < 1:
            raise ValueError(f"history capacity must be at least 1, got {capacity}")
        self.capacity = capacity
        self.frames = deque(maxlen=capacity)

    def __len__(self):
        return len(self.frames)

    def push(self, frame: ObservationFrame) -> None:
        self.frames.append(frame)

    def flatten(self) -> np.ndarray:
        if not self.frames:
            raise ValueError("history buffer is empty")
        # a cold buffer repeats its earliest frame
        padding = [self.frames[0]] * (self.capacity - len(self.frames))
        return np.concatenate([frame.vector() for frame in (*padding, *self.frames)])


class PolicyInputs(NamedTuple):
    actor: np.ndarray
    critic: np.ndarray
    estimator_target: np.ndarray
