# odometry/ekf.py
import dataclasses
import heapq
import logging

import numpy as np
from scipy.spatial.transform import Rotation

from odometry.exceptions import CovarianceError
from odometry.models import EkfParams, EkfState, ImuSample, OdometryTrack, PoseSample, SourceStreams, VelocitySample

logger = logging.getLogger(__name__)

POSITION = slice(0, 3)
VELOCITY = slice(3, 6)
ATTITUDE = slice(6, 9)
PSD_TOLERANCE = 1e-9

# order of sources sharing a timestamp
IMU, VELOCITY_UPDATE, POSE_UPDATE = 0, 1, 2


def _checked(covariance: np.ndarray) -> np.ndarray:
    covariance = 0.5 * (covariance + covariance.T)
    smallest = float(np.linalg.eigvalsh(covariance).min())
    if not np.isfinite(smallest) or smallest < -PSD_TOLERANCE:
        raise CovarianceError(f"covariance lost positive semi-definiteness (min eigenvalue {smallest:.3e})")
    return covariance


def initial_state(t: float, position, orientation, velocity=(0.0, 0.0, 0.0), params: EkfParams = EkfParams(),
                  position_sigma: float = 1e-3, velocity_sigma: float = 0.1) -> EkfState:
    covariance = np.diag(np.concatenate([
        np.full(3, position_sigma ** 2),
        np.full(3, velocity_sigma ** 2),
        np.full(3, params.attitude_sigma ** 2),
    ]))
    return EkfState(t=t, position=np.array(position, dtype=float), velocity=np.array(velocity, dtype=float),
                    orientation=np.array(orientation, dtype=float), covariance=covariance)


def ekf_predict(state: EkfState, imu: ImuSample, dt: float, params: EkfParams = EkfParams()) -> EkfState:
    """Propagate by ``dt`` and take the orientation from the IMU sample.

    The velocity keeps its body-frame value, so it turns with the orientation change. The
    attitude error covariance is reset to the IMU's and decoupled from position and velocity.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    new_rotation = Rotation.from_quat(imu.orientation)
    turn = (new_rotation * state.rotation.inv()).as_matrix()

    transition = np.eye(9)
    transition[POSITION, VELOCITY] = np.eye(3) * dt
    transition[VELOCITY, VELOCITY] = turn
    process = np.zeros((9, 9))
    process[POSITION, POSITION] = np.eye(3) * params.position_noise * dt
    process[VELOCITY, VELOCITY] = np.eye(3) * params.velocity_noise * dt

    covariance = transition @ state.covariance @ transition.T + process
    covariance[ATTITUDE, :] = 0.0
    covariance[:, ATTITUDE] = 0.0
    covariance[ATTITUDE, ATTITUDE] = np.eye(3) * params.attitude_sigma ** 2

    return dataclasses.replace(
        state,
        t=state.t + dt,
        position=state.position + state.velocity * dt,
        velocity=turn @ state.velocity,
        orientation=new_rotation.as_quat(),
        covariance=_checked(covariance),
    )


def _update(state: EkfState, block: slice, measured, noise: np.ndarray, params: EkfParams, counter: str):
    """Linear update on one 3-vector block of the state, gated on the Mahalanobis distance."""
    h = np.zeros((3, 9))
    h[:, block] = np.eye(3)
    current = state.position if block == POSITION else state.velocity
    innovation = np.asarray(measured, dtype=float) - current
    s = h @ state.covariance @ h.T + noise
    distance = float(innovation @ np.linalg.solve(s, innovation))
    if distance > params.gate:
        logger.debug("%s sample at t=%.3f rejected, Mahalanobis %.2f > %.2f", counter, state.t, distance, params.gate)
        return dataclasses.replace(state, **{counter: getattr(state, counter) + 1})

    gain = np.linalg.solve(s, h @ state.covariance).T
    correction = gain @ innovation
    joseph = np.eye(9) - gain @ h
    covariance = joseph @ state.covariance @ joseph.T + gain @ noise @ gain.T
    return dataclasses.replace(
        state,
        position=state.position + correction[POSITION],
        velocity=state.velocity + correction[VELOCITY],
        covariance=_checked(covariance),
    )


def ekf_update_velocity(state: EkfState, sample: VelocitySample, params: EkfParams = EkfParams()) -> EkfState:
    """Fuse a body-frame velocity, rotated into the world with the current orientation."""
    rotation = state.rotation.as_matrix()
    noise = rotation @ np.diag(np.square(params.velocity_sigma)) @ rotation.T
    return _update(state, VELOCITY, rotation @ np.asarray(sample.velocity, dtype=float), noise, params,
                   'rejected_velocity')


def ekf_update_pose(state: EkfState, sample: PoseSample, params: EkfParams = EkfParams()) -> EkfState:
    return _update(state, POSITION, sample.position, np.diag(np.square(params.position_sigma)), params,
                   'rejected_pose')


def _events(streams: SourceStreams, use_vio: bool):
    # timestamps rounded so samples of different rates that coincide sort by source order
    events = [(round(s.t, 9), IMU, i, s) for i, s in enumerate(streams.imu)]
    events += [(round(s.t, 9), VELOCITY_UPDATE, i, s) for i, s in enumerate(streams.estimator)]
    if use_vio:
        events += [(round(s.t, 9), POSE_UPDATE, i, s) for i, s in enumerate(streams.vio)]
    heapq.heapify(events)
    while events:
        yield heapq.heappop(events)


def run_ekf(streams: SourceStreams, initial: EkfState, params: EkfParams = EkfParams(),
            use_vio: bool = True) -> OdometryTrack:
    """Fuse the streams in timestamp order and record the estimate at every IMU tick."""
    state = initial
    records = []

    def record():
        if records and state.t <= records[-1][0]:
            records[-1] = (state.t, state.position, state.orientation, state.velocity)
        else:
            records.append((state.t, state.position, state.orientation, state.velocity))

    for _, kind, _, sample in _events(streams, use_vio):
        if kind == IMU:
            record()
            dt = sample.t - state.t
            if dt > 1e-12:
                state = ekf_predict(state, sample, dt, params)
            else:
                state = dataclasses.replace(state, orientation=np.asarray(sample.orientation, dtype=float))
        elif kind == VELOCITY_UPDATE:
            state = ekf_update_velocity(state, sample, params)
        else:
            # VIO runs off the IMU grid; carry its sample back to the filter time
            lag = sample.t - state.t
            aligned = PoseSample(state.t, np.asarray(sample.position, dtype=float) - state.velocity * lag)
            state = ekf_update_pose(state, aligned, params)
    record()

    if state.rejected_velocity or state.rejected_pose:
        logger.info("EKF rejected %d velocity and %d pose samples", state.rejected_velocity, state.rejected_pose)
    times, positions, orientations, velocities = zip(*records)
    return OdometryTrack(times, positions, orientations, velocities)


def vio_track(streams: SourceStreams) -> OdometryTrack:
    """Positions from VIO alone, held through dropouts, with orientations from the IMU."""
    if not streams.imu:
        raise ValueError("VIO-only odometry needs the IMU stream")
    times = np.array([s.t for s in streams.imu])
    orientations = np.array([s.orientation for s in streams.imu])
    if streams.vio:
        vio_times = np.array([s.t for s in streams.vio])
        vio_positions = np.array([s.position for s in streams.vio])
        latest = np.clip(np.searchsorted(vio_times, times + 1e-9, side='right') - 1, 0, None)
        positions = vio_positions[latest]
    else:
        logger.warning("VIO-only odometry without any VIO sample; positions stay at the origin")
        positions = np.zeros((len(times), 3))
    velocities = np.gradient(positions, times, axis=0) if len(times) > 1 else np.zeros((1, 3))
    return OdometryTrack(times, positions, orientations, velocities)
