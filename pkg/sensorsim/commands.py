# sensorsim/commands.py
import itertools

import numpy as np

from sensorsim.models import CommandProfile, CommandSegment

TRACKING_GRID = {
    'vx': (-1.0, -0.5, 0.0, 0.5, 1.0),
    'vy': (-0.5, 0.0, 0.5),
    'wz': (-1.0, 0.0, 1.0),
}


def constant_profile(vx: float, duration: float, vy: float = 0.0, wz: float = 0.0) -> CommandProfile:
    return CommandProfile(segments=(CommandSegment(vx, vy, wz, duration),))


def tracking_grid_profile(segment: float = 2.0, grid=TRACKING_GRID) -> CommandProfile:
    """Every (v_x, v_y, w_z) combination of the grid, ``segment`` seconds each."""
    return CommandProfile(segments=tuple(
        CommandSegment(vx, vy, wz, segment) for vx, vy, wz in itertools.product(grid['vx'], grid['vy'], grid['wz'])
    ))


def sample_episode_profile(rng: np.random.Generator, episode: float = 20.0,
                           ranges=((-1.0, 1.0), (-0.5, 0.5), (-1.0, 1.0))) -> CommandProfile:
    """Commands drawn uniformly at the start and again midway through the episode."""
    halves = []
    for _ in range(2):
        vx, vy, wz = (float(rng.uniform(lo, hi)) for lo, hi in ranges)
        halves.append(CommandSegment(vx, vy, wz, episode / 2.0))
    return CommandProfile(segments=tuple(halves))
