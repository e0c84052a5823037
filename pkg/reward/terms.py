# reward/terms.py
import math

import numpy as np

from reward.models import TERMS, RewardBreakdown, RewardWeights


def phi(x, sigma: float = 0.25) -> float:
    """Tracking kernel exp(-|x|^2 / sigma^2)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return math.exp(-float(x @ x) / (sigma * sigma))


def _joints(value, name):
    value = np.asarray(value, dtype=float).reshape(-1)
    if value.shape != (12,):
        raise ValueError(f"{name} needs 12 values, got {value.size}")
    return value


def pd_torques(action, joint_positions, joint_velocities, q_default, kp: float = 20.0, kd: float = 0.5,
               action_scale: float = 0.25) -> np.ndarray:
    """Joint torques of the PD controller tracking ``q_default + action_scale * action``."""
    action = _joints(action, 'action')
    target = np.asarray(q_default, dtype=float) + action_scale * action
    error = target - _joints(joint_positions, 'joint positions')
    return kp * error - kd * _joints(joint_velocities, 'joint velocities')


def compute_terms(state, command, action, prev_action, torques, collisions: int,
                  cfg: RewardWeights = RewardWeights(), ground_height: float = 0.0) -> RewardBreakdown:
    """Every reward term at one control tick, unweighted and weighted.

    ``ground_height`` is the terrain height under the base, so the trunk height term measures
    the height above ground. Air time is credited on touchdown only.
    """
    command = np.asarray(command, dtype=float).reshape(-1)
    if command.shape != (3,):
        raise ValueError(f"command needs (vx, vy, wz), got {command.size} values")
    action = _joints(action, 'action')
    prev_action = _joints(prev_action, 'previous action')
    torques = _joints(torques, 'torques')
    linear = np.asarray(state.linear_velocity, dtype=float)
    angular = np.asarray(state.angular_velocity, dtype=float)
    touchdown = np.asarray(state.touchdown, dtype=bool)

    values = {
        'lin_vel_tracking': phi(command[:2] - linear[:2], cfg.tracking_sigma),
        'ang_vel_tracking': phi(command[2] - angular[2], cfg.tracking_sigma),
        'feet_air_time': float(np.sum((np.asarray(state.last_air_times) - cfg.air_time_target)[touchdown])),
        'lin_vel_z': float(linear[2] ** 2),
        'ang_vel_xy': float(angular[:2] @ angular[:2]),
        'joint_position': float(np.sum(np.square(_joints(state.joint_positions, 'joint positions')
                                                 - np.asarray(cfg.q_default)))),
        'joint_acceleration': float(np.sum(np.square(state.joint_accelerations))),
        'joint_torques': float(torques @ torques),
        'action_rate': float(np.sum(np.square(action - prev_action))),
        'collisions': float(collisions),
        'trunk_height': float((state.position[2] - ground_height - cfg.trunk_height_default) ** 2),
        'torque_limits': float(np.sum(np.maximum(0.0, np.abs(torques) - np.asarray(cfg.torque_limit)))),
    }
    contributions = {term: cfg.weight(term) * values[term] for term in TERMS}
    raw_sum = float(sum(contributions.values()))
    return RewardBreakdown(values=values, contributions=contributions, raw_sum=raw_sum,
                           total=total(raw_sum, cfg))


def total(breakdown, cfg: RewardWeights = RewardWeights()) -> float:
    """Weighted sum; a negative sum is scaled by ``cfg.negative_scale``."""
    raw = breakdown.raw_sum if isinstance(breakdown, RewardBreakdown) else float(breakdown)
    return raw * cfg.negative_scale if raw < 0 else raw
