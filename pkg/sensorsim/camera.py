# sensorsim/camera.py
import logging

import numpy as np

from cloudfilter.models import PointCloud
from scene.builder import heights_at
from scene.models import Heightfield
from sensorsim.models import CameraModel, RobotState

logger = logging.getLogger(__name__)


def _axis_setup(origin, direction, grid_origin, resolution, cell):
    """Per-axis DDA stepping: step sign, first boundary crossing and crossing spacing."""
    step = np.sign(direction).astype(np.int64)
    with np.errstate(divide='ignore'):
        inv = np.where(direction != 0.0, 1.0 / direction, np.inf)
    boundary = grid_origin + (cell + (step > 0)) * resolution
    t_max = np.where(direction != 0.0, (boundary - origin) * inv, np.inf)
    t_delta = np.where(direction != 0.0, resolution * np.abs(inv), np.inf)
    return step, t_max, t_delta


def march_rays(hf: Heightfield, origin, directions: np.ndarray, max_range: float) -> np.ndarray:
    """Distance along each unit ray to the first terrain hit, ``inf`` for misses.

    Cells are flat-topped columns, so a ray either lands on a cell top inside the cell or hits
    the vertical face of a higher cell when it enters it. All rays advance together, one cell
    boundary per iteration; finished rays are dropped from the working set.
    """
    origin = np.asarray(origin, dtype=float)
    n = len(directions)
    hits = np.full(n, np.inf)
    ix0, iy0, inside = hf.cell_index(origin[0], origin[1])
    if n == 0 or not inside:
        return hits
    ceiling = float(hf.cells.max())

    idx = np.arange(n)
    dx, dy, dz = directions[:, 0].copy(), directions[:, 1].copy(), directions[:, 2].copy()
    ix = np.full(n, int(ix0))
    iy = np.full(n, int(iy0))
    sx, tx, ddx = _axis_setup(origin[0], dx, hf.origin[0], hf.resolution, ix)
    sy, ty, ddy = _axis_setup(origin[1], dy, hf.origin[1], hf.resolution, iy)
    t_enter = np.zeros(n)

    while idx.size:
        h = hf.cells[ix, iy]
        t_exit = np.minimum(np.minimum(tx, ty), max_range)
        z_enter = origin[2] + dz * t_enter
        z_exit = origin[2] + dz * t_exit

        face = z_enter <= h
        top = ~face & (dz < 0.0) & (z_exit <= h)
        found = face | top
        if found.any():
            t_hit = np.where(face, t_enter, (h - origin[2]) / np.where(dz < 0.0, dz, -1.0))
            hits[idx[found]] = t_hit[found]

        step_x = tx < ty
        nix = np.where(step_x, ix + sx, ix)
        niy = np.where(step_x, iy, iy + sy)
        in_grid = (nix >= 0) & (nix < hf.cells_x) & (niy >= 0) & (niy < hf.cells_y)
        rising_clear = (dz >= 0.0) & (z_exit > ceiling)
        keep = ~found & (t_exit < max_range) & in_grid & ~rising_clear
        if not keep.any():
            break

        t_enter = np.where(step_x, tx, ty)[keep]
        tx = np.where(step_x, tx + ddx, tx)[keep]
        ty = np.where(step_x, ty, ty + ddy)[keep]
        ix, iy = nix[keep], niy[keep]
        sx, sy, ddx, ddy = sx[keep], sy[keep], ddx[keep], ddy[keep]
        dz = dz[keep]
        idx = idx[keep]
    return hits


def render_depth(camera: CameraModel, base_state: RobotState, hf: Heightfield) -> PointCloud:
    """Ray-cast one ray per pixel against the heightfield; points in the sensor frame."""
    sensor_pose = base_state.pose * camera.mount_pose
    origin = sensor_pose.position
    ground, inside = heights_at(hf, [origin[0]], [origin[1]])
    if not inside[0] or origin[2] <= ground[0]:
        logger.warning("camera %s at t=%.3f is below the terrain or outside the map; empty cloud",
                       camera.name, base_state.t)
        return PointCloud.empty(base_state.t, camera.name)

    rays = camera.ray_directions
    distances = march_rays(hf, origin, sensor_pose.rotation.apply(rays), camera.max_range)
    valid = (distances >= camera.min_range) & (distances <= camera.max_range)
    points = rays[valid] * distances[valid, None]
    return PointCloud(t=base_state.t, frame=camera.name, points=points, directions=rays[valid])


def inject_sensor_noise(cloud: PointCloud, camera: CameraModel, seed) -> PointCloud:
    """Range noise along each ray and i.i.d. dropout. ``seed`` is an int or a Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = len(cloud)
    # draw both streams for every point so the sequence does not depend on the settings
    unit = rng.standard_normal(n)
    keep = rng.random(n) >= camera.noise.dropout
    if n == 0:
        return cloud

    points = cloud.points
    if camera.noise.sigma0 > 0.0 or camera.noise.k > 0.0:
        ranges = np.linalg.norm(points, axis=1)
        directions = cloud.directions
        if directions is None:
            directions = points / np.where(ranges > 0.0, ranges, 1.0)[:, None]
        points = points + (unit * camera.noise.sigma(ranges))[:, None] * directions
    directions = None if cloud.directions is None else cloud.directions[keep]
    return PointCloud(t=cloud.t, frame=cloud.frame, points=points[keep], directions=directions)
