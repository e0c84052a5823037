# cloudfilter/body.py
import logging
import math
from typing import NamedTuple

import numpy as np

from cloudfilter.models import BodyModel, LegGeometry, PointCloud
from scene.builder import heights_at

logger = logging.getLogger(__name__)

LEGS = ('FR', 'FL', 'RR', 'RL')
# calf tip treated as foot, excluded from collision checks
FOOT_LENGTH = 0.06


class PosedCapsule(NamedTuple):
    link: str
    a: np.ndarray
    b: np.ndarray
    radius: float


def _rot_x(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def leg_link_frames(joint_positions, legs: LegGeometry = LegGeometry()) -> dict:
    """Base-frame (origin, rotation) of every thigh and calf link.

    Joints per leg are hip abduction about x, then thigh and calf pitch about y. Positive
    pitch swings the link below it backwards.
    """
    q = np.asarray(joint_positions, dtype=float).reshape(4, 3)
    frames = {}
    for i, leg in enumerate(LEGS):
        side = -1.0 if leg.endswith('R') else 1.0
        hip_rot = _rot_x(q[i, 0])
        thigh_origin = np.asarray(legs.hip_offsets[leg]) + hip_rot @ np.array([0.0, side * legs.hip_length, 0.0])
        thigh_rot = hip_rot @ _rot_y(q[i, 1])
        calf_origin = thigh_origin + thigh_rot @ np.array([0.0, 0.0, -legs.thigh_length])
        calf_rot = thigh_rot @ _rot_y(q[i, 2])
        frames[f'{leg}_thigh'] = (thigh_origin, thigh_rot)
        frames[f'{leg}_calf'] = (calf_origin, calf_rot)
    return frames


def foot_positions(state, legs: LegGeometry = LegGeometry()) -> np.ndarray:
    """World positions of the four feet in FR, FL, RR, RL order."""
    frames = leg_link_frames(state.joint_positions, legs)
    local = np.array([
        frames[f'{leg}_calf'][0] + frames[f'{leg}_calf'][1] @ np.array([0.0, 0.0, -legs.calf_length]) for leg in LEGS
    ])
    return state.pose.apply(local)


def pose_capsules(state, body: BodyModel) -> list:
    """Capsules of ``body`` in the frame the state's pose is expressed in."""
    frames = leg_link_frames(state.joint_positions, body.legs)
    frames['trunk'] = (np.zeros(3), np.eye(3))
    pose = state.pose
    posed = []
    for capsule in body.capsules:
        origin, rotation = frames[capsule.link]
        a = origin + rotation @ np.asarray(capsule.a, dtype=float)
        b = origin + rotation @ np.asarray(capsule.b, dtype=float)
        posed.append(PosedCapsule(capsule.link, pose.apply(a), pose.apply(b), capsule.radius))
    return posed


def segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the segment a-b."""
    ab = b - a
    length_sq = float(ab @ ab)
    if length_sq == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / length_sq, 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def body_mask(points: np.ndarray, capsules, margin: float) -> np.ndarray:
    """True for points within radius + margin of any capsule."""
    inside = np.zeros(len(points), dtype=bool)
    for capsule in capsules:
        inside |= segment_distance(points, capsule.a, capsule.b) <= capsule.radius + margin
    return inside


def body_filter(cloud: PointCloud, state, body: BodyModel, max_skew: float = 1.0 / 30.0) -> PointCloud:
    """Drop the points that fall on the robot's own trunk and legs."""
    if abs(cloud.t - state.t) > max_skew + 1e-9:
        logger.warning("body filter pairs a cloud at t=%.3f with joints from t=%.3f", cloud.t, state.t)
    if not len(cloud):
        return cloud
    inside = body_mask(cloud.points, pose_capsules(state, body), body.margin)
    if inside.any():
        logger.debug("body filter removed %d of %d points", inside.sum(), len(cloud))
    return cloud.select(~inside)


def count_terrain_collisions(state, body: BodyModel, hf, samples: int = 8) -> int:
    """Number of thigh and calf links whose capsule dips below the terrain.

    The foot end of each calf is left out; stance feet rest on the ground.
    """
    count = 0
    for capsule in pose_capsules(state, body):
        if capsule.link == 'trunk':
            continue
        b = capsule.b
        if capsule.link.endswith('_calf'):
            length = np.linalg.norm(capsule.b - capsule.a)
            b = capsule.a + (capsule.b - capsule.a) * max(0.0, 1.0 - FOOT_LENGTH / length)
        along = capsule.a + np.linspace(0.0, 1.0, samples)[:, None] * (b - capsule.a)
        ground, inside = heights_at(hf, along[:, 0], along[:, 1])
        if np.any(inside & (along[:, 2] - capsule.radius < ground)):
            count += 1
    return count


def trunk_collides(state, body: BodyModel, hf, samples: int = 8) -> bool:
    """Whether the trunk capsule touches the terrain."""
    for capsule in pose_capsules(state, body):
        if capsule.link != 'trunk':
            continue
        along = capsule.a + np.linspace(0.0, 1.0, samples)[:, None] * (capsule.b - capsule.a)
        ground, inside = heights_at(hf, along[:, 0], along[:, 1])
        if np.any(inside & (along[:, 2] - capsule.radius < ground)):
            return True
    return False
