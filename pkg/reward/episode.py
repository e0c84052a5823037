# reward/episode.py
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from cloudfilter.body import count_terrain_collisions, trunk_collides
from cloudfilter.models import BodyModel
from reward.models import RewardBreakdown, RewardWeights
from reward.terms import compute_terms, pd_torques
from scene.builder import height_at
from scene.exceptions import OutOfExtentError

logger = logging.getLogger(__name__)


class RewardEpisode:
    """Reward bookkeeping over one rollout at the control rate.

    The episode ends at the first tick whose trunk touches the terrain. That tick is still
    scored; nothing after it is, so feet in the air at that point never earn air time.
    Past the terrain edge the trunk height is measured against the last ground seen.
    """

    def __init__(self, hf, cfg: RewardWeights = RewardWeights(), body: BodyModel = BodyModel.go1(),
                 kp: float = 20.0, kd: float = 0.5, action_scale: float = 0.25):
        self.hf = hf
        self.cfg = cfg
        self.body = body
        self.kp, self.kd, self.action_scale = kp, kd, action_scale
        self.prev_action = np.zeros(12)
        self.times = []
        self.breakdowns = []
        self.terminated_at: Optional[float] = None
        self.last_ground = 0.0
        self.off_terrain = False

    @property
    def terminated(self) -> bool:
        return self.terminated_at is not None

    def step(self, state, command, action) -> Optional[RewardBreakdown]:
        if self.terminated:
            return None
        action = np.asarray(action, dtype=float)
        torques = pd_torques(action, state.joint_positions, state.joint_velocities, self.cfg.q_default,
                             self.kp, self.kd, self.action_scale)
        collisions = count_terrain_collisions(state, self.body, self.hf)
        try:
            ground = height_at(self.hf, state.position[0], state.position[1])
            self.last_ground, self.off_terrain = ground, False
        except OutOfExtentError:
            ground = self.last_ground
            if not self.off_terrain:
                logger.warning("base left the terrain at (%.2f, %.2f), t=%.2f s; holding ground height %.3f m",
                               state.position[0], state.position[1], state.t, ground)
            self.off_terrain = True
        breakdown = compute_terms(state, command, action, self.prev_action, torques, collisions, self.cfg,
                                  ground_height=ground)
        self.prev_action = action
        self.times.append(state.t)
        self.breakdowns.append(breakdown)
        if trunk_collides(state, self.body, self.hf):
            self.terminated_at = state.t
            logger.warning("trunk hit the terrain at t=%.2f s; reward episode terminated", state.t)
        return breakdown

    def mean_total(self) -> float:
        return float(np.mean([b.total for b in self.breakdowns])) if self.breakdowns else 0.0

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        table = pd.DataFrame([b.row() for b in self.breakdowns])
        table.insert(0, 't', self.times)
        table.to_csv(path, index=False, float_format='%.9g')
        return path
