# cloudfilter/models.py
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation


def _frozen(array, shape_tail, name):
    array = np.ascontiguousarray(array, dtype=float)
    if array.size == 0:
        array = array.reshape((0,) + shape_tail)
    if array.ndim != 1 + len(shape_tail) or array.shape[1:] != shape_tail:
        raise ValueError(f"{name} must have shape (N, {', '.join(map(str, shape_tail))}), got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite values")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PointCloud:
    """Timestamped set of 3D points tagged with the frame they are expressed in.

    ``directions`` are unit ray directions in the same frame, kept when the cloud comes from a
    depth sensor so range noise can be applied along the ray. ``flags`` name conditions a filter
    met but did not treat as an error, e.g. a cloud too small for outlier removal. ``clipped`` counts
    points a producer wanted but could not supply, such as ground-truth cells past the heightfield edge.
    """

    t: float
    frame: str
    points: np.ndarray
    directions: Optional[np.ndarray] = None
    flags: tuple = ()
    clipped: int = 0

    def __post_init__(self):
        if not self.frame:
            raise ValueError("PointCloud needs a frame tag")
        object.__setattr__(self, 'points', _frozen(self.points, (3,), 'points'))
        if self.directions is not None:
            directions = _frozen(self.directions, (3,), 'directions')
            if len(directions) != len(self.points):
                raise ValueError("directions and points differ in length")
            object.__setattr__(self, 'directions', directions)

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls, t: float, frame: str) -> PointCloud:
        return cls(t=t, frame=frame, points=np.zeros((0, 3)))

    def select(self, mask) -> PointCloud:
        directions = None if self.directions is None else self.directions[mask]
        return PointCloud(t=self.t, frame=self.frame, points=self.points[mask], directions=directions, flags=self.flags,
                          clipped=self.clipped)

    def with_points(self, points, directions=None) -> PointCloud:
        return PointCloud(t=self.t, frame=self.frame, points=points, directions=directions, flags=self.flags,
                          clipped=self.clipped)

    def flagged(self, flag: str) -> PointCloud:
        if flag in self.flags:
            return self
        return PointCloud(t=self.t, frame=self.frame, points=self.points, directions=self.directions,
                          flags=self.flags + (flag,), clipped=self.clipped)

    def transformed(self, rotation: Rotation, translation, frame: str) -> PointCloud:
        """Express the cloud in ``frame`` given the pose of the current frame inside it."""
        points = rotation.apply(self.points) + np.asarray(translation, dtype=float) if len(self) else self.points
        directions = None
        if self.directions is not None:
            directions = rotation.apply(self.directions) if len(self) else self.directions
        return PointCloud(t=self.t, frame=frame, points=points, directions=directions, flags=self.flags,
                          clipped=self.clipped)

    @classmethod
    def concatenate(cls, clouds: Sequence[PointCloud], frame: str) -> PointCloud:
        """Stack clouds in the given order; directions survive only if every part has them."""
        t = max((c.t for c in clouds), default=0.0)
        if not clouds:
            return cls.empty(t, frame)
        points = np.concatenate([c.points for c in clouds])
        directions = None
        if all(c.directions is not None for c in clouds):
            directions = np.concatenate([c.directions for c in clouds])
        return cls(t=t, frame=frame, points=points, directions=directions,
                   clipped=sum(c.clipped for c in clouds))

    def to_xyz(self, path) -> None:
        """ASCII XYZ, one "x y z" triple per line."""
        with open(path, 'w') as file:
            for x, y, z in self.points:
                file.write(f"{x:.6f} {y:.6f} {z:.6f}\n")

    @classmethod
    def from_xyz(cls, path, t: float = 0.0, frame: str = 'world') -> PointCloud:
        points = []
        for line in Path(path).read_text().splitlines():
            if line.strip():
                points.append([float(v) for v in line.split()[:3]])
        return cls(t=t, frame=frame, points=np.asarray(points, dtype=float).reshape(-1, 3))


@dataclass(frozen=True)
class Capsule:
    """Segment ``a``-``b`` swept by a sphere of ``radius``; endpoints in the link frame."""

    link: str
    a: tuple
    b: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"capsule on {self.link} needs a positive radius")


@dataclass(frozen=True)
class LegGeometry:
    """Go1-sized leg kinematics: hip abduction about x, thigh and calf pitch about y."""

    hip_offsets: dict = field(default_factory=lambda: {
        'FR': (0.1881, -0.04675, 0.0),
        'FL': (0.1881, 0.04675, 0.0),
        'RR': (-0.1881, -0.04675, 0.0),
        'RL': (-0.1881, 0.04675, 0.0),
    })
    hip_length: float = 0.08
    thigh_length: float = 0.213
    calf_length: float = 0.213


@dataclass(frozen=True)
class BodyModel:
    """Capsules on the trunk and the leg links, posed from joint positions.

    Link names are ``trunk`` or ``<leg>_thigh`` / ``<leg>_calf`` for legs FR, FL, RR, RL.
    Thigh capsules run from the hip to the knee, calf capsules from the knee to the foot.
    """

    capsules: tuple
    margin: float = 0.02
    legs: LegGeometry = field(default_factory=LegGeometry)

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("body margin must be non-negative")

    @classmethod
    def go1(cls, margin: float = 0.02) -> BodyModel:
        legs = LegGeometry()
        capsules = [Capsule('trunk', (-0.19, 0.0, 0.0), (0.19, 0.0, 0.0), 0.07)]
        for leg in ('FR', 'FL', 'RR', 'RL'):
            capsules.append(Capsule(f'{leg}_thigh', (0.0, 0.0, 0.0), (0.0, 0.0, -legs.thigh_length), 0.025))
            capsules.append(Capsule(f'{leg}_calf', (0.0, 0.0, 0.0), (0.0, 0.0, -legs.calf_length), 0.02))
        return cls(capsules=tuple(capsules), margin=margin, legs=legs)


FILTER_STAGES = ('outliers', 'body', 'voxel')


@dataclass(frozen=True)
class FilterParams:
    """Knobs of the per-frame preprocessing chain, applied in ``order``."""

    order: tuple = FILTER_STAGES
    neighbors: int = 8
    std_ratio: float = 2.0
    voxel_size: float = 0.025
    body_margin: float = 0.02

    def __post_init__(self):
        unknown = set(self.order) - set(FILTER_STAGES)
        if unknown:
            raise ValueError(f"unknown filter stages {sorted(unknown)}; choose from {FILTER_STAGES}")
        if len(set(self.order)) != len(self.order):
            raise ValueError(f"filter stages repeat in {self.order}")
        if self.neighbors < 1 or self.voxel_size <= 0 or self.body_margin < 0:
            raise ValueError("neighbors >= 1, voxel_size > 0 and body_margin >= 0 are required")
