# odometry/fusion.py
import logging

from odometry.ekf import initial_state, run_ekf, vio_track
from odometry.models import ODOMETRY_MODES, EkfParams, OdometryTrack, SourceErrorModel
from odometry.sources import make_source_streams

logger = logging.getLogger(__name__)


def estimate_odometry(trajectory, mode: str, model: SourceErrorModel = SourceErrorModel(),
                      params: EkfParams = EkfParams(), seed: int = 0, z_drift_rate: float = 0.0,
                      rates=(50.0, 200.0, 90.0)) -> OdometryTrack:
    """Odometry track for a ground-truth trajectory under one of ``ODOMETRY_MODES``.

    ``gt`` passes the ground truth through. The EKF modes start from the true initial pose and
    velocity. ``z_drift_rate`` adds a vertical drift on top of any mode.
    """
    if mode not in ODOMETRY_MODES:
        raise ValueError(f"unknown odometry mode {mode!r}; choose from {ODOMETRY_MODES}")
    states = list(trajectory)
    if not states:
        raise ValueError("cannot estimate odometry for an empty trajectory")

    if mode == 'gt':
        track = OdometryTrack.from_trajectory(states)
    else:
        streams = make_source_streams(states, model, seed, rates)
        if mode == 'vio':
            track = vio_track(streams)
        else:
            first = states[0]
            start = initial_state(first.t, first.position, first.orientation, first.world_velocity, params)
            track = run_ekf(streams, start, params, use_vio=(mode == 'ekf-vio'))
    logger.info("odometry %s over %.2f s: %d estimates", mode, track.times[-1] - track.times[0], len(track))
    return track.with_z_drift(z_drift_rate)
