# elevmap/grid.py
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy import ndimage

from cloudfilter.models import PointCloud
from elevmap.models import CellEstimate, IntegrationResult, SensorVarianceModel

logger = logging.getLogger(__name__)

MAX_LENGTH = 5.0


class ElevationMap:
    """Robot-centric 2.5D grid with a per-cell Kalman height estimate.

    The window is ``length`` meters on a side, centered on ``center``. ``height`` holds the
    estimate in the odometry frame the clouds are given in, including every drift shift applied
    so far; ``z_shift`` is the sum of those shifts.
    """

    def __init__(self, resolution: float = 0.025, length: float = 5.0, center=(0.0, 0.0)):
        if not resolution > 0:
            raise ValueError(f"map resolution must be positive, got {resolution}")
        if not 0 < length <= MAX_LENGTH + 1e-9:
            raise ValueError(f"map length must lie in (0, {MAX_LENGTH}] m, got {length}")
        self.resolution = float(resolution)
        self.size = max(1, int(round(length / resolution)))
        self.center = np.array(center, dtype=float).reshape(2)
        self.height = np.zeros((self.size, self.size))
        self.variance = np.full((self.size, self.size), np.inf)
        self.valid = np.zeros((self.size, self.size), dtype=bool)
        self.last_update = np.zeros((self.size, self.size))
        self.z_shift = 0.0
        self.time = -math.inf
        self.skipped_points = 0

    @property
    def length(self) -> float:
        return self.size * self.resolution

    @property
    def origin(self) -> np.ndarray:
        """World xy of the lower corner of cell (0, 0)."""
        return self.center - self.length / 2.0

    def cell_index(self, xs, ys):
        ix = np.floor((np.asarray(xs, dtype=float) - self.origin[0]) / self.resolution).astype(np.int64)
        iy = np.floor((np.asarray(ys, dtype=float) - self.origin[1]) / self.resolution).astype(np.int64)
        inside = (ix >= 0) & (ix < self.size) & (iy >= 0) & (iy < self.size)
        return ix, iy, inside

    def cell_center(self, ix, iy):
        return (self.origin[0] + (np.asarray(ix) + 0.5) * self.resolution,
                self.origin[1] + (np.asarray(iy) + 0.5) * self.resolution)

    def integrate_cloud(self, cloud: PointCloud, sensor_origin, model: SensorVarianceModel,
                        t: float) -> IntegrationResult:
        """Fuse a filtered cloud into the map.

        Every hit cell first has its variance inflated by the time since its last update, then
        takes a scalar Kalman update per point, in input order. An unseen cell takes its first
        point as is. The per-cell updates are carried out in information form, which gives the
        same result as the sequential updates.
        """
        if t < self.time:
            raise ValueError(f"cloud at t={t:.4f} s is older than the last map update at {self.time:.4f} s")
        self.time = t
        if not len(cloud):
            return IntegrationResult(0, 0, 0)

        points = cloud.points
        ix, iy, inside = self.cell_index(points[:, 0], points[:, 1])
        skipped = int(np.count_nonzero(~inside))
        if skipped:
            self.skipped_points += skipped
            logger.debug("%d of %d points fell outside the map window", skipped, len(points))
        points, ix, iy = points[inside], ix[inside], iy[inside]
        if not len(points):
            return IntegrationResult(0, 0, skipped)

        ranges = np.linalg.norm(points - np.asarray(sensor_origin, dtype=float), axis=1)
        r = model.measurement_variance(ranges)
        z = points[:, 2]
        flat = ix * self.size + iy
        cells, first = np.unique(flat, return_index=True)

        height = self.height.reshape(-1)
        variance = self.variance.reshape(-1)
        valid = self.valid.reshape(-1)
        last = self.last_update.reshape(-1)

        was_valid = valid[cells]
        prior_h = np.where(was_valid, height[cells], z[first])
        prior_p = variance[cells] + model.time_rate * (t - last[cells])
        prior_info = np.where(was_valid, 1.0 / prior_p, 0.0)

        slot = np.searchsorted(cells, flat)
        info = prior_info + np.bincount(slot, weights=1.0 / r, minlength=len(cells))
        innovation = np.bincount(slot, weights=(z - prior_h[slot]) / r, minlength=len(cells))
        posterior_p = 1.0 / info

        height[cells] = prior_h + posterior_p * innovation
        variance[cells] = posterior_p
        valid[cells] = True
        last[cells] = t
        return IntegrationResult(len(cells), len(points), skipped)

    def roughness(self) -> np.ndarray:
        """Height range over the valid cells of each 3x3 neighbourhood; inf for invalid cells."""
        high = ndimage.maximum_filter(np.where(self.valid, self.height, -np.inf), size=3,
                                      mode='constant', cval=-np.inf)
        low = ndimage.minimum_filter(np.where(self.valid, self.height, np.inf), size=3,
                                     mode='constant', cval=np.inf)
        return np.where(self.valid, high - low, np.inf)

    def drift_compensate(self, cloud: PointCloud, gate: float = 0.10, min_points: int = 20,
                         flatness: float = 0.03) -> float:
        """Shift every valid cell by the median discrepancy between the cloud and the map.

        Only points over level cells count (neighbourhood range within ``flatness``), and of
        those only residuals inside ``gate``. Faces and edges of steps never vote.
        """
        if not len(cloud):
            return 0.0
        points = cloud.points
        ix, iy, inside = self.cell_index(points[:, 0], points[:, 1])
        ix, iy, z = ix[inside], iy[inside], points[inside, 2]
        level = self.roughness()[ix, iy] <= flatness
        residual = z[level] - self.height[ix[level], iy[level]]
        residual = residual[np.abs(residual) < gate]
        if len(residual) < min_points:
            logger.debug("drift compensation skipped: %d level points within the %.3f m gate", len(residual), gate)
            return 0.0
        shift = float(np.median(residual))
        self.height[self.valid] += shift
        self.z_shift += shift
        return shift

    def recenter(self, robot_xy) -> tuple:
        """Scroll the window by whole cells so the robot sits within a cell of the center.

        Cells scrolled out are dropped and the cells scrolled in start invalid. Returns the
        scroll in cells.
        """
        offset = (np.asarray(robot_xy, dtype=float).reshape(2) - self.center) / self.resolution
        shift = tuple(int(math.trunc(round(v, 9))) for v in offset)
        if shift == (0, 0):
            return shift
        for axis, k in enumerate(shift):
            if k == 0:
                continue
            scrolled = min(abs(k), self.size)
            for layer, fill in ((self.height, 0.0), (self.variance, np.inf), (self.valid, False),
                                (self.last_update, 0.0)):
                rolled = np.roll(layer, -k, axis=axis)
                stale = [slice(None)] * 2
                stale[axis] = slice(self.size - scrolled, None) if k > 0 else slice(None, scrolled)
                rolled[tuple(stale)] = fill
                layer[...] = rolled
            self.center[axis] += k * self.resolution
        return shift

    def query_height(self, x: float, y: float) -> Optional[CellEstimate]:
        """The cell's estimate, or None when it is outside the window or never measured."""
        ix, iy, inside = self.cell_index(x, y)
        if not inside or not self.valid[ix, iy]:
            return None
        return CellEstimate(float(self.height[ix, iy]), float(self.variance[ix, iy]))

    def query_heights(self, xs, ys):
        """Vectorized lookup: heights (NaN where missing) and the mask of available cells."""
        ix, iy, inside = self.cell_index(xs, ys)
        available = inside.copy()
        available[inside] = self.valid[ix[inside], iy[inside]]
        heights = np.full(np.shape(available), np.nan)
        heights[available] = self.height[ix[available], iy[available]]
        return heights, available

    def valid_points(self) -> np.ndarray:
        """(N, 3) cell centers with their heights for every valid cell."""
        ix, iy = np.nonzero(self.valid)
        cx, cy = self.cell_center(ix, iy)
        return np.column_stack([cx, cy, self.height[ix, iy]])

    def to_csv(self, path) -> Path:
        """Snapshot with one row per cell; height and variance are empty for invalid cells."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        ix, iy = np.meshgrid(np.arange(self.size), np.arange(self.size), indexing='ij')
        cx, cy = self.cell_center(ix, iy)
        frame = pd.DataFrame({
            'ix': ix.ravel(),
            'iy': iy.ravel(),
            'x': cx.ravel(),
            'y': cy.ravel(),
            'height': np.where(self.valid, self.height, np.nan).ravel(),
            'variance': np.where(self.valid, self.variance, np.nan).ravel(),
        })
        with open(path, 'w', newline='') as file:
            file.write(f"# center_x={float(self.center[0])!r},center_y={float(self.center[1])!r},"
                       f"resolution={float(self.resolution)!r},z_shift={float(self.z_shift)!r}\n")
            frame.to_csv(file, index=False, float_format="%.9g")
        return path

    @classmethod
    def from_csv(cls, path):
        with open(path) as file:
            meta = dict(item.split('=') for item in file.readline().lstrip('#').strip().split(','))
            frame = pd.read_csv(file)
        size = int(round(math.sqrt(len(frame))))
        grid = cls(resolution=float(meta['resolution']), length=size * float(meta['resolution']),
                   center=(float(meta['center_x']), float(meta['center_y'])))
        valid = frame['height'].notna().to_numpy()
        ix, iy = frame['ix'].to_numpy()[valid], frame['iy'].to_numpy()[valid]
        grid.height[ix, iy] = frame['height'].to_numpy()[valid]
        grid.variance[ix, iy] = frame['variance'].to_numpy()[valid]
        grid.valid[ix, iy] = True
        grid.z_shift = float(meta['z_shift'])
        return grid
