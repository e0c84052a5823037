# cloudfilter/filters.py
import logging

import numpy as np
from scipy.spatial import cKDTree

from cloudfilter.body import body_filter
from cloudfilter.models import FilterParams, PointCloud

logger = logging.getLogger(__name__)

TOO_SMALL_FOR_OUTLIERS = 'too_small_for_outlier_removal'


def remove_outliers(cloud: PointCloud, k: int = 8, std_ratio: float = 2.0) -> PointCloud:
    """Statistical outlier removal.

    A point survives when the mean distance to its ``k`` nearest neighbours is at most the
    global mean of that quantity plus ``std_ratio`` standard deviations. Clouds with ``k`` or
    fewer points come back unchanged and flagged.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if len(cloud) <= k:
        if len(cloud):
            logger.debug("cloud %s has %d points, not enough for k=%d; skipping outlier removal",
                         cloud.frame, len(cloud), k)
        return cloud.flagged(TOO_SMALL_FOR_OUTLIERS)

    distances, _ = cKDTree(cloud.points).query(cloud.points, k=k + 1)
    # column 0 is the point itself
    mean_distance = distances[:, 1:].mean(axis=1)
    threshold = mean_distance.mean() + std_ratio * mean_distance.std()
    keep = mean_distance <= threshold
    logger.debug("outlier removal on %s dropped %d of %d points", cloud.frame, len(cloud) - keep.sum(), len(cloud))
    return cloud.select(keep)


def voxel_downsample(cloud: PointCloud, resolution: float = 0.025) -> PointCloud:
    """One centroid per occupied voxel of the grid aligned with the cloud's frame axes."""
    if not resolution > 0:
        raise ValueError(f"voxel resolution must be positive, got {resolution}")
    if not len(cloud):
        return cloud

    keys = np.floor(cloud.points / resolution).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    centroids = np.column_stack([
        np.bincount(inverse, weights=cloud.points[:, axis], minlength=len(counts)) / counts for axis in range(3)
    ])
    return cloud.with_points(centroids)


def apply_filters(cloud: PointCloud, state, body, params: FilterParams = FilterParams()) -> PointCloud:
    """Run the configured stages in order. ``cloud`` must be in the frame ``state`` is posed in."""
    for stage in params.order:
        if stage == 'outliers':
            cloud = remove_outliers(cloud, params.neighbors, params.std_ratio)
        elif stage == 'body':
            cloud = body_filter(cloud, state, body)
        elif stage == 'voxel':
            cloud = voxel_downsample(cloud, params.voxel_size)
    return cloud
