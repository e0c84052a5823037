# scene/models.py
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial.transform import Rotation

from scene.exceptions import SceneError


@dataclass(frozen=True)
class Pose:
    """Rigid pose; orientation is a unit quaternion in scipy's (x, y, z, w) order."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self):
        position = np.array(self.position, dtype=float).reshape(3)
        orientation = np.array(self.orientation, dtype=float).reshape(4)
        norm = np.linalg.norm(orientation)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("pose orientation must be a non-zero quaternion")
        object.__setattr__(self, 'position', position)
        object.__setattr__(self, 'orientation', orientation / norm)

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float = 0.0, yaw: float = 0.0) -> Pose:
        return cls(position=(x, y, z), orientation=Rotation.from_euler('z', yaw).as_quat())

    @classmethod
    def from_rotation(cls, position, rotation: Rotation) -> Pose:
        return cls(position=position, orientation=rotation.as_quat())

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.orientation)

    @property
    def yaw(self) -> float:
        return float(self.rotation.as_euler('ZYX')[0])

    def yaw_aligned(self) -> Pose:
        """Same position, roll and pitch dropped."""
        return Pose.from_xyz_yaw(*self.position, yaw=self.yaw)

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.size == 0:
            return points.reshape(-1, 3)
        return self.rotation.apply(points) + self.position

    def inverse(self) -> Pose:
        inv = self.rotation.inv()
        return Pose.from_rotation(-inv.apply(self.position), inv)

    def __mul__(self, other: Pose) -> Pose:
        return Pose.from_rotation(self.apply(other.position), self.rotation * other.rotation)


@dataclass(frozen=True)
class Heightfield:
    """Dense ground-truth terrain. ``cells[ix, iy]`` is the height of the cell whose lower
    corner is ``origin + (ix, iy) * resolution``."""

    resolution: float
    origin: tuple
    cells: np.ndarray

    def __post_init__(self):
        if not self.resolution > 0:
            raise SceneError(f"heightfield resolution must be positive, got {self.resolution}")
        cells = np.array(self.cells, dtype=float)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise SceneError(f"heightfield needs at least 1x1 cells, got shape {cells.shape}")
        if not np.all(np.isfinite(cells)):
            raise SceneError("heightfield contains non-finite heights")
        cells.setflags(write=False)
        object.__setattr__(self, 'cells', cells)
        object.__setattr__(self, 'origin', (float(self.origin[0]), float(self.origin[1])))

    @property
    def cells_x(self) -> int:
        return self.cells.shape[0]

    @property
    def cells_y(self) -> int:
        return self.cells.shape[1]

    @property
    def bounds(self) -> tuple:
        """(x_min, x_max, y_min, y_max) of the covered area."""
        x0, y0 = self.origin
        return x0, x0 + self.cells_x * self.resolution, y0, y0 + self.cells_y * self.resolution

    def cell_index(self, xs, ys):
        """Cell indices of world points and a mask of the points inside the extent."""
        ix = np.floor((np.asarray(xs, dtype=float) - self.origin[0]) / self.resolution).astype(np.int64)
        iy = np.floor((np.asarray(ys, dtype=float) - self.origin[1]) / self.resolution).astype(np.int64)
        inside = (ix >= 0) & (ix < self.cells_x) & (iy >= 0) & (iy < self.cells_y)
        return ix, iy, inside

    def cell_center(self, ix, iy):
        x0, y0 = self.origin
        return x0 + (np.asarray(ix) + 0.5) * self.resolution, y0 + (np.asarray(iy) + 0.5) * self.resolution


@dataclass(frozen=True)
class FlatRegion:
    """Constant height; without ``x_start``/``length`` it covers the whole world."""

    z: float
    x_start: Optional[float] = None
    length: Optional[float] = None

    @property
    def bounded(self) -> bool:
        return self.x_start is not None

    def validate(self):
        if (self.x_start is None) != (self.length is None):
            raise SceneError("FlatRegion needs both x_start and length, or neither")
        if self.length is not None and self.length <= 0:
            raise SceneError(f"FlatRegion length must be positive, got {self.length}")

    def span(self):
        return (self.x_start, self.x_start + self.length) if self.bounded else (-math.inf, math.inf)

    def profile(self, xc: np.ndarray) -> np.ndarray:
        lo, hi = self.span()
        return np.where((xc >= lo) & (xc < hi), self.z, np.nan)


@dataclass(frozen=True)
class Step:
    """Box of ``height`` spanning [x_start, x_start + depth) over the full world width."""

    x_start: float
    height: float
    depth: float

    bounded = True

    def validate(self):
        if self.height <= 0 or self.depth <= 0:
            raise SceneError(f"Step at x={self.x_start} needs positive height and depth")

    def span(self):
        return self.x_start, self.x_start + self.depth

    def profile(self, xc: np.ndarray) -> np.ndarray:
        lo, hi = self.span()
        return np.where((xc >= lo) & (xc < hi), self.height, np.nan)


@dataclass(frozen=True)
class Platform:
    """Stair of ``rise_steps`` (absolute height, depth) onto a platform, then a down ramp."""

    x_start: float
    rise_steps: tuple
    platform_height: float
    platform_length: float
    ramp_slope: float

    bounded = True

    def validate(self):
        if not self.rise_steps:
            raise SceneError("Platform needs at least one rise step")
        previous = 0.0
        for height, depth in self.rise_steps:
            if height <= previous or depth <= 0:
                raise SceneError(f"Platform rise steps must climb with positive depth, got {self.rise_steps}")
            previous = height
        if self.platform_height < previous:
            raise SceneError("platform_height is below the last rise step")
        if self.platform_length <= 0 or self.ramp_slope <= 0:
            raise SceneError("platform_length and ramp_slope must be positive")

    @property
    def ramp_length(self) -> float:
        return self.platform_height / self.ramp_slope

    def span(self):
        length = sum(depth for _, depth in self.rise_steps) + self.platform_length + self.ramp_length
        return self.x_start, self.x_start + length

    def profile(self, xc: np.ndarray) -> np.ndarray:
        out = np.full(xc.shape, np.nan)
        x = self.x_start
        for height, depth in self.rise_steps:
            out[(xc >= x) & (xc < x + depth)] = height
            x += depth
        out[(xc >= x) & (xc < x + self.platform_length)] = self.platform_height
        x += self.platform_length
        on_ramp = (xc >= x) & (xc < x + self.ramp_length)
        out[on_ramp] = self.platform_height - self.ramp_slope * (xc[on_ramp] - x)
        return out


Primitive = Union[FlatRegion, Step, Platform]


@dataclass(frozen=True)
class SceneSpec:
    primitives: tuple
    x_min: float = 0.0
    x_max: float = 6.0
    y_min: float = -1.5
    y_max: float = 1.5
    base_height: float = 0.0

    def validate(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise SceneError(f"scene extent is empty: x [{self.x_min}, {self.x_max}], y [{self.y_min}, {self.y_max}]")
        for primitive in self.primitives:
            primitive.validate()
        layers = [p for p in self.primitives if not p.bounded]
        if len(layers) > 1:
            raise SceneError(f"{len(layers)} unbounded FlatRegions overlap everywhere; keep one")
        bounded = sorted((p for p in self.primitives if p.bounded), key=lambda p: p.span()[0])
        for left, right in zip(bounded, bounded[1:]):
            if right.span()[0] < left.span()[1]:
                raise SceneError(
                    f"{type(left).__name__} over x [{left.span()[0]:.3f}, {left.span()[1]:.3f}) overlaps "
                    f"{type(right).__name__} starting at x={right.span()[0]:.3f}"
                )
