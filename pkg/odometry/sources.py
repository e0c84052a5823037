# odometry/sources.py
import logging

import numpy as np
from scipy.spatial.transform import Rotation

from Legged_perception.seeding import substream
from odometry.models import (ImuSample, OdometryTrack, PoseSample, SourceErrorModel, SourceStreams,
                             VelocitySample)

logger = logging.getLogger(__name__)


def sample_times(t_start: float, t_end: float, rate: float) -> np.ndarray:
    """k / rate for every k with t_start <= k / rate <= t_end."""
    first = int(np.ceil(round(t_start * rate, 9)))
    last = int(np.floor(round(t_end * rate, 9)))
    return np.arange(first, last + 1) / rate


def _resample(states, times):
    track = OdometryTrack.from_trajectory(states)
    body_velocity = np.array([s.linear_velocity for s in states])
    angular_velocity = np.array([s.angular_velocity for s in states])
    gt_times = track.times

    def interp(values):
        return np.column_stack([np.interp(times, gt_times, values[:, axis]) for axis in range(3)])

    return track.positions_at(times), track.rotations_at(times), interp(body_velocity), interp(angular_velocity)


def make_source_streams(gt, model: SourceErrorModel, seed: int,
                        rates=(50.0, 200.0, 90.0)) -> SourceStreams:
    """Estimator, IMU and VIO samples synthesized from the ground-truth states.

    Each source draws from its own named substream of ``seed``. Noise is drawn for every
    sample, including VIO samples later dropped, so toggling one setting does not reshuffle
    the others.
    """
    states = list(gt)
    if not states:
        return SourceStreams(estimator=[], imu=[], vio=[])
    if any(b.t <= a.t for a, b in zip(states, states[1:])):
        raise ValueError("ground-truth stream must be strictly increasing in time")
    t0, t1 = states[0].t, states[-1].t
    estimator_rate, imu_rate, vio_rate = rates

    times = sample_times(t0, t1, estimator_rate)
    _, _, body_velocity, _ = _resample(states, times)
    rng = substream(seed, 'odometry.estimator')
    noise = rng.standard_normal((len(times), 3)) * np.asarray(model.estimator.sigma)
    measured = body_velocity + np.asarray(model.estimator.bias) + noise
    estimator = [VelocitySample(float(t), v) for t, v in zip(times, measured)]

    times = sample_times(t0, t1, imu_rate)
    _, rotations, _, angular_velocity = _resample(states, times)
    rng = substream(seed, 'odometry.imu')
    tilt = rng.standard_normal((len(times), 3)) * model.imu.orientation_sigma
    gyro = angular_velocity + rng.standard_normal((len(times), 3)) * model.imu.angular_velocity_sigma
    orientations = (rotations * Rotation.from_rotvec(tilt)).as_quat()
    imu = [ImuSample(float(t), q, w) for t, q, w in zip(times, orientations, gyro)]

    times = sample_times(t0, t1, vio_rate)
    positions, _, _, _ = _resample(states, times)
    rng = substream(seed, 'odometry.vio')
    steps = rng.standard_normal((len(times), 3)) * model.vio.random_walk * np.sqrt(1.0 / vio_rate)
    steps[0] = 0.0
    drift = np.cumsum(steps, axis=0)
    measured = positions + drift + rng.standard_normal((len(times), 3)) * model.vio.sigma
    available = np.ones(len(times), dtype=bool)
    for start, end in model.vio.dropouts:
        available &= ~((times >= start - 1e-9) & (times <= end + 1e-9))
    if not available.all():
        logger.info("VIO dropouts removed %d of %d samples", np.count_nonzero(~available), len(times))
    vio = [PoseSample(float(t), p) for t, p, ok in zip(times, measured, available) if ok]

    return SourceStreams(estimator=estimator, imu=imu, vio=vio)
