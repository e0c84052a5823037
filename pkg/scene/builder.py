# scene/builder.py
import logging
import math

import numpy as np

from cloudfilter.models import PointCloud
from scene.exceptions import OutOfExtentError
from scene.models import FlatRegion, Heightfield, Platform, Pose, SceneSpec, Step

logger = logging.getLogger(__name__)


def _cell_count(length, resolution):
    # round first so 2.0 / 0.025 does not become 81 cells
    return max(1, int(math.ceil(round(length / resolution, 9))))


def build_scene(spec: SceneSpec, resolution: float) -> Heightfield:
    """Sample the scene at cell centers. Vertical faces stay cell-sharp."""
    spec.validate()
    if not resolution > 0:
        raise ValueError(f"resolution must be positive, got {resolution}")

    nx = _cell_count(spec.x_max - spec.x_min, resolution)
    ny = _cell_count(spec.y_max - spec.y_min, resolution)
    xc = spec.x_min + (np.arange(nx) + 0.5) * resolution

    profile = np.full(nx, float(spec.base_height))
    # unbounded base layer first, bounded primitives on top of it
    for primitive in sorted(spec.primitives, key=lambda p: p.bounded):
        heights = primitive.profile(xc)
        covered = ~np.isnan(heights)
        profile[covered] = heights[covered]

    cells = np.repeat(profile[:, None], ny, axis=1)
    logger.debug("built %dx%d heightfield at %.4f m from %d primitives", nx, ny, resolution, len(spec.primitives))
    return Heightfield(resolution=resolution, origin=(spec.x_min, spec.y_min), cells=cells)


def height_at(hf: Heightfield, x: float, y: float) -> float:
    """Height of the containing cell; raises OutOfExtentError outside the extent."""
    ix, iy, inside = hf.cell_index(x, y)
    if not inside:
        raise OutOfExtentError(x, y, hf.bounds)
    return float(hf.cells[int(ix), int(iy)])


def heights_at(hf: Heightfield, xs, ys):
    """Vectorized lookup: heights (NaN outside) and the inside mask."""
    ix, iy, inside = hf.cell_index(xs, ys)
    heights = np.full(np.shape(inside), np.nan)
    heights[inside] = hf.cells[ix[inside], iy[inside]]
    return heights, inside


def region_mask(local_xy: np.ndarray, region) -> np.ndarray:
    """Points of a yaw-aligned frame that fall in the ``region`` rectangle centered on it."""
    half_x, half_y = region[0] / 2.0, region[1] / 2.0
    return (np.abs(local_xy[:, 0]) <= half_x) & (np.abs(local_xy[:, 1]) <= half_y)


def ground_truth_patch(hf: Heightfield, base_pose: Pose, region=(0.5, 0.3), t: float = 0.0) -> PointCloud:
    """One world point per cell center inside the yaw-aligned region around the base."""
    frame = base_pose.yaw_aligned()
    corners = frame.apply([[sx * region[0] / 2, sy * region[1] / 2, 0.0] for sx in (-1, 1) for sy in (-1, 1)])
    x0, y0 = hf.origin
    ix_lo = int(math.floor((corners[:, 0].min() - x0) / hf.resolution))
    ix_hi = int(math.floor((corners[:, 0].max() - x0) / hf.resolution))
    iy_lo = int(math.floor((corners[:, 1].min() - y0) / hf.resolution))
    iy_hi = int(math.floor((corners[:, 1].max() - y0) / hf.resolution))

    ix, iy = np.meshgrid(np.arange(ix_lo, ix_hi + 1), np.arange(iy_lo, iy_hi + 1), indexing='ij')
    ix, iy = ix.ravel(), iy.ravel()
    cx, cy = hf.cell_center(ix, iy)
    local = frame.inverse().apply(np.column_stack([cx, cy, np.zeros_like(cx)]))
    in_region = region_mask(local, region)
    in_grid = (ix >= 0) & (ix < hf.cells_x) & (iy >= 0) & (iy < hf.cells_y)

    clipped = int(np.count_nonzero(in_region & ~in_grid))
    if clipped:
        logger.warning("ground-truth patch at (%.3f, %.3f) clipped %d points outside the heightfield",
                       base_pose.position[0], base_pose.position[1], clipped)

    keep = in_region & in_grid
    points = np.column_stack([cx[keep], cy[keep], hf.cells[ix[keep], iy[keep]]])
    return PointCloud(t=t, frame='world', points=points, clipped=clipped)


def step_scene(height: float, x_start: float = 2.0, depth: float = 0.30, **extent) -> SceneSpec:
    """Single box step, the traversal benchmark."""
    return SceneSpec(primitives=(FlatRegion(z=0.0), Step(x_start=x_start, height=height, depth=depth)), **extent)


def obstacle_scene(x_start: float = 2.0, **extent) -> SceneSpec:
    """Two 10 cm steps onto a 30 cm platform followed by a downward ramp."""
    platform = Platform(
        x_start=x_start,
        rise_steps=((0.10, 0.30), (0.20, 0.30)),
        platform_height=0.30,
        platform_length=0.60,
        ramp_slope=0.25,
    )
    return SceneSpec(primitives=(FlatRegion(z=0.0), platform), **extent)


def random_step_scene(rng: np.random.Generator, count: int = 6, min_height: float = 0.05,
                      max_height: float = 0.30, depth=(0.3, 0.8), gap=(0.5, 1.5), **extent) -> SceneSpec:
    """Discrete steps with uniformly drawn height, depth and spacing, like the training terrain."""
    x = extent.get('x_min', 0.0) + rng.uniform(*gap)
    steps = []
    for _ in range(count):
        step = Step(x_start=float(x), height=float(rng.uniform(min_height, max_height)),
                    depth=float(rng.uniform(*depth)))
        steps.append(step)
        x = step.span()[1] + rng.uniform(*gap)
    extent.setdefault('x_max', float(x))
    return SceneSpec(primitives=(FlatRegion(z=0.0), *steps), **extent)
