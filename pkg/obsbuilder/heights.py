# obsbuilder/heights.py
import logging

import numpy as np

from obsbuilder.models import HEIGHT_GRID, HEIGHT_PITCH, HEIGHT_SAMPLES, HeightNoiseState

logger = logging.getLogger(__name__)


def _local_grid() -> np.ndarray:
    nx, ny = HEIGHT_GRID
    xs = (np.arange(nx) - (nx - 1) / 2.0) * HEIGHT_PITCH
    ys = (np.arange(ny) - (ny - 1) / 2.0) * HEIGHT_PITCH
    gx, gy = np.meshgrid(xs, ys, indexing='ij')
    return np.column_stack([gx.ravel(), gy.ravel(), np.zeros(HEIGHT_SAMPLES)])


LOCAL_GRID = _local_grid()


def sample_positions(base_pose) -> np.ndarray:
    """World xy of the height samples, rows running forward in the yaw-aligned base frame."""
    return base_pose.yaw_aligned().apply(LOCAL_GRID)[:, :2]


def _relative_heights(elevation_map, positions, base_height, default_height):
    heights, available = elevation_map.query_heights(positions[:, 0], positions[:, 1])
    return np.where(available, heights - base_height, default_height), available


def sample_heights(elevation_map, base_pose, default_height: float = -0.30) -> np.ndarray:
    """Map heights around the base, relative to the base height; unseen cells take ``default_height``."""
    values, available = _relative_heights(elevation_map, sample_positions(base_pose), base_pose.position[2],
                                          default_height)
    missing = HEIGHT_SAMPLES - int(np.count_nonzero(available))
    if missing:
        logger.debug("%d of %d height samples filled with %.3f", missing, HEIGHT_SAMPLES, default_height)
    return values


def apply_height_noise(samples, positions, state: HeightNoiseState, t: float, elevation_map,
                       rng: np.random.Generator, base_height: float = 0.0,
                       default_height: float = -0.30) -> np.ndarray:
    """Noisy copy of the height samples.

    The xy part of the bias moves the sampling positions and the map is queried again; the z part
    is added on top, followed by independent per-sample noise. ``state`` redraws its bias once
    ``period`` has passed since the last draw.
    """
    samples = np.asarray(samples, dtype=float)
    if state.due(t):
        state.bias = rng.standard_normal(3) * np.asarray(state.bias_sigma, dtype=float)
        state.last_resample = t
        logger.debug("height sample bias redrawn at t=%.2f: %s", t, state.bias)

    if np.any(state.bias[:2]):
        shifted = np.asarray(positions, dtype=float) + state.bias[:2]
        samples, _ = _relative_heights(elevation_map, shifted, base_height, default_height)
    return samples + state.bias[2] + rng.standard_normal(len(samples)) * state.sample_sigma
