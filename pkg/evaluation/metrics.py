# evaluation/metrics.py
import logging
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from cloudfilter.models import PointCloud
from evaluation.exceptions import MetricError
from evaluation.models import ChamferResult, MetricReport, TrackingRms
from odometry.models import OdometryTrack
from scene.builder import ground_truth_patch, region_mask

logger = logging.getLogger(__name__)


def _points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    return np.asarray(cloud, dtype=float).reshape(-1, 3)


def chamfer_one_way(source, target) -> ChamferResult:
    """Mean Euclidean distance from each source point to its nearest target point, in centimeters.

    Not symmetric: only the source points are averaged over.
    """
    source, target = _points(source), _points(target)
    if not len(target):
        raise MetricError("chamfer distance needs a non-empty target cloud")
    if not len(source):
        logger.debug("chamfer distance of an empty source cloud reported as 0")
        return ChamferResult(0.0, empty_source=True)
    distances, _ = cKDTree(target).query(source, k=1)
    return ChamferResult(float(np.mean(distances)) * 100.0)


def map_vs_ground_truth(elevation_map, hf, base_pose, map_pose=None, region=(0.5, 0.3)) -> Optional[float]:
    """Chamfer distance in cm from the mapped region around the robot to the terrain under it.

    ``map_pose`` is the robot pose in the frame of the map, i.e. from odometry; map points are
    carried into the world with ``base_pose * map_pose^-1``. Returns None when the region holds
    no valid cell.
    """
    map_pose = base_pose if map_pose is None else map_pose
    points = elevation_map.valid_points()
    local = map_pose.yaw_aligned().inverse().apply(points)
    points = points[region_mask(local, region)]
    if not len(points):
        logger.debug("no mapped cell around (%.2f, %.2f); window skipped", *map_pose.position[:2])
        return None
    world = (base_pose * map_pose.inverse()).apply(points)
    truth = ground_truth_patch(hf, base_pose, region)
    return chamfer_one_way(world, truth).cm


def _as_track(trajectory) -> OdometryTrack:
    if isinstance(trajectory, OdometryTrack):
        return trajectory
    samples = list(trajectory)
    return OdometryTrack(times=[s.t for s in samples], positions=[s.position for s in samples],
                         orientations=[s.orientation for s in samples], velocities=np.zeros((len(samples), 3)))


def _yaw(rotations: Rotation) -> np.ndarray:
    return rotations.as_euler('ZYX')[:, 0]


def rte(estimate, ground_truth, segment_length: float = 1.0, tags=None) -> MetricReport:
    """Relative trajectory error over consecutive ground-truth segments of ``segment_length`` meters.

    Each segment starts with the estimate aligned to the ground truth in position and yaw; the
    error is the distance between the two segment end points.
    """
    est, gt = _as_track(estimate), _as_track(ground_truth)
    if est.times[-1] < gt.times[0] or est.times[0] > gt.times[-1]:
        raise MetricError("estimate and ground truth do not overlap in time")
    travelled = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(gt.positions, axis=0), axis=1))])
    count = int((travelled[-1] + 1e-9) // segment_length)
    if count < 1:
        raise MetricError(f"ground truth covers {travelled[-1]:.3f} m, less than one {segment_length} m segment")

    marks = np.searchsorted(travelled, np.arange(count + 1) * segment_length - 1e-9)
    marks = np.minimum(marks, len(travelled) - 1)
    times = gt.times[marks]
    est_positions = est.positions_at(times)
    est_yaw = _yaw(est.rotations_at(times))
    gt_yaw = _yaw(Rotation.from_quat(gt.orientations[marks]))

    report = MetricReport(metric='rte', units='m', tags=dict(tags or {}))
    for k in range(count):
        align = Rotation.from_euler('z', gt_yaw[k] - est_yaw[k])
        moved = align.apply(est_positions[k + 1] - est_positions[k])
        end = gt.positions[marks[k]] + moved
        report.add(np.linalg.norm(end - gt.positions[marks[k + 1]]))
    logger.info("rte over %d segments of %.1f m: %.4f m", count, segment_length, report.mean)
    return report


def _velocity_stream(measured):
    if isinstance(measured, tuple) and len(measured) == 2:
        times, values = measured
        return np.asarray(times, dtype=float), np.asarray(values, dtype=float).reshape(-1, 3)
    states = list(measured)
    times = np.array([s.t for s in states])
    values = np.array([[s.linear_velocity[0], s.linear_velocity[1], s.angular_velocity[2]] for s in states])
    return times, values.reshape(-1, 3)


def tracking_rms(measured, profile, settle: float = 0.7, segment: float = 2.0) -> TrackingRms:
    """Pooled per-axis RMS of (v_x, v_y, w_z) against the commanded values.

    ``measured`` is a trajectory or a ``(times, values)`` pair. Each profile segment is cut into
    windows of at most ``segment`` seconds, and the first ``settle`` seconds of every window are
    left out. Windows not longer than ``settle`` are skipped.
    """
    times, values = _velocity_stream(measured)
    if not len(times) or times[-1] < profile.duration - 1e-6:
        raise MetricError("velocity stream does not cover the command profile")
    squared = np.zeros(3)
    samples = skipped = 0
    for start, end, part in profile.boundaries():
        for w0 in np.arange(start, end - 1e-9, segment):
            w1 = min(end, w0 + segment)
            if w1 - w0 <= settle + 1e-9:
                skipped += 1
                logger.warning("command window [%.2f, %.2f) is within the %.2f s settling time; skipped",
                               w0, w1, settle)
                continue
            inside = (times >= w0 + settle - 1e-9) & (times < w1 - 1e-9)
            errors = values[inside] - part.command
            squared += np.sum(np.square(errors), axis=0)
            samples += int(np.count_nonzero(inside))
    if not samples:
        raise MetricError("no velocity sample left after the settling windows")
    vx, vy, wz = np.sqrt(squared / samples)
    return TrackingRms(float(vx), float(vy), float(wz), samples, skipped)
