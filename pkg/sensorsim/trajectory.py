# sensorsim/trajectory.py
import logging
import math

import numpy as np
from scipy.spatial.transform import Rotation

from scene.builder import heights_at
from scene.models import Heightfield
from sensorsim.models import CommandProfile, GaitParams, RobotState, Trajectory

logger = logging.getLogger(__name__)

# trot: diagonal pairs FR+RL and FL+RR in antiphase
LEG_PHASE = np.array([0.0, math.pi, math.pi, 0.0])
HIP_X = 0.1881
HIP_Y = 0.04675 + 0.08
FOOTPRINT = np.array([[HIP_X, -HIP_Y], [HIP_X, HIP_Y], [-HIP_X, -HIP_Y], [-HIP_X, HIP_Y]])
STAND_THRESHOLD = 1e-6


def _lowpass(value, target, dt, tau):
    if tau <= 0:
        return target
    return value + (target - value) * dt / (tau + dt)


class _TrotOscillator:
    """Joint targets of a parametric trot; all joints rest at q_default while standing."""

    def __init__(self, gait: GaitParams, phase: float):
        self.gait = gait
        self.phase = phase
        self.q_default = np.array(gait.q_default, dtype=float)
        self.omega = 2.0 * math.pi * gait.frequency

    def advance(self, dt, walking):
        if walking:
            self.phase = (self.phase + self.omega * dt) % (2.0 * math.pi)

    def joints(self, walking):
        q = self.q_default.copy()
        qd = np.zeros(12)
        qdd = np.zeros(12)
        if not walking:
            return q, qd, qdd, np.ones(4, dtype=bool)
        g, w = self.gait, self.omega
        leg_phase = self.phase + LEG_PHASE
        s, c = np.sin(leg_phase), np.cos(leg_phase)
        # phase boundaries count as stance
        swing = s > 1e-9
        thigh, calf = np.arange(4) * 3 + 1, np.arange(4) * 3 + 2
        q[thigh] += g.thigh_amplitude * s
        qd[thigh] = g.thigh_amplitude * w * c
        qdd[thigh] = -g.thigh_amplitude * w * w * s
        q[calf] -= g.calf_amplitude * np.where(swing, s, 0.0)
        qd[calf] = -g.calf_amplitude * w * np.where(swing, c, 0.0)
        qdd[calf] = g.calf_amplitude * w * w * np.where(swing, s, 0.0)
        return q, qd, qdd, ~swing


def _terrain_under(hf, x, y, yaw):
    rot = np.array([[math.cos(yaw), -math.sin(yaw)], [math.sin(yaw), math.cos(yaw)]])
    feet = FOOTPRINT @ rot.T + np.array([x, y])
    heights, inside = heights_at(hf, feet[:, 0], feet[:, 1])
    return heights, bool(np.all(inside))


def simulate_trajectory(profile: CommandProfile, hf: Heightfield, dt: float, gait: GaitParams = GaitParams(),
                        seed: int = 0, start=(1.0, 0.0, 0.0)) -> Trajectory:
    """Kinematic base motion over the terrain, sampled every ``dt`` from t = 0 to the profile end.

    The body-frame command is integrated with the yaw at mid-step. The base height follows the
    mean terrain height under the feet plus the trunk height; pitch follows the fore-aft slope.
    ``start`` is (x, y, yaw). The stream stops early, flagged ``truncated``, when the footprint
    leaves the heightfield.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    rng = np.random.default_rng(seed)
    oscillator = _TrotOscillator(gait, phase=gait.phase_jitter * rng.uniform(0.0, 2.0 * math.pi))

    x, y, yaw = (float(v) for v in start)
    heights, inside = _terrain_under(hf, x, y, yaw)
    if not inside:
        logger.warning("trajectory starts outside the heightfield at (%.3f, %.3f)", x, y)
        return Trajectory(states=[], truncated=True)
    z = float(np.mean(heights)) + gait.trunk_height
    pitch = 0.0
    velocity = np.zeros(3)
    air = np.zeros(4)
    contacts_prev = np.ones(4, dtype=bool)

    steps = int(round(profile.duration / dt))
    states = []
    truncated = False
    for k in range(steps + 1):
        t = k * dt
        command = profile.command_at(t)
        walking = bool(np.any(np.abs(command) > STAND_THRESHOLD))
        target = command.copy()
        if walking and gait.sway_amplitude:
            w = 2.0 * math.pi * gait.frequency
            target[1] += gait.sway_amplitude * w * math.cos(oscillator.phase)
        if gait.velocity_time_constant > 0:
            velocity = _lowpass(velocity, target, dt, gait.velocity_time_constant)
        else:
            velocity = target

        q, qd, qdd, contacts = oscillator.joints(walking)
        touchdown = contacts & ~contacts_prev
        last_air = np.where(touchdown, air, 0.0)
        air = np.where(contacts, 0.0, air + dt)
        contacts_prev = contacts

        # integrate to the next sample before emitting, so velocities describe [t, t + dt)
        mid_yaw = yaw + 0.5 * velocity[2] * dt
        nx = x + (math.cos(mid_yaw) * velocity[0] - math.sin(mid_yaw) * velocity[1]) * dt
        ny = y + (math.sin(mid_yaw) * velocity[0] + math.cos(mid_yaw) * velocity[1]) * dt
        nyaw = yaw + velocity[2] * dt
        heights, inside = _terrain_under(hf, nx, ny, nyaw)
        if not inside and k < steps:
            truncated = True
        if inside:
            nz = _lowpass(z, float(np.mean(heights)) + gait.trunk_height, dt, gait.height_time_constant)
            slope_target = -math.atan2(0.5 * (heights[0] + heights[1] - heights[2] - heights[3]), 2.0 * HIP_X)
            npitch = _lowpass(pitch, slope_target, dt, gait.pitch_time_constant)
        else:
            nz, npitch = z, pitch
        vz = (nz - z) / dt
        pitch_rate = (npitch - pitch) / dt

        rotation = Rotation.from_euler('ZYX', [yaw, pitch, 0.0])
        world_velocity = np.array([
            math.cos(mid_yaw) * velocity[0] - math.sin(mid_yaw) * velocity[1],
            math.sin(mid_yaw) * velocity[0] + math.cos(mid_yaw) * velocity[1],
            vz,
        ])
        states.append(RobotState(
            t=t,
            position=np.array([x, y, z]),
            orientation=rotation.as_quat(),
            linear_velocity=rotation.inv().apply(world_velocity),
            angular_velocity=np.array([0.0, pitch_rate, velocity[2]]),
            joint_positions=q,
            joint_velocities=qd,
            joint_accelerations=qdd,
            foot_contacts=contacts.copy(),
            foot_air_times=air.copy(),
            touchdown=touchdown,
            last_air_times=last_air,
            world_velocity=world_velocity,
        ))
        if truncated:
            logger.warning("trajectory left the heightfield at t=%.3f s; stream truncated", t)
            break
        x, y, yaw, z, pitch = nx, ny, nyaw, nz, npitch
        oscillator.advance(dt, walking)

    return Trajectory(states=states, truncated=truncated)
