# runner/models.py
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from cloudfilter.models import FilterParams
from obsbuilder.models import HeightNoiseState
from odometry.models import EkfParams, SourceErrorModel
from reward.models import RewardWeights
from scene.models import SceneSpec
from sensorsim.models import CommandProfile, GaitParams

SCENARIO_KINDS = ('custom', 'step_sweep', 'obstacle', 'tracking_sweep')


@dataclass(frozen=True)
class Rates:
    sim: float = 200.0
    control: float = 50.0
    cloud: float = 30.0
    chamfer: float = 20.0
    estimator: float = 50.0
    imu: float = 200.0
    vio: float = 90.0


@dataclass(frozen=True)
class MappingSettings:
    resolution: float = 0.025
    length: float = 5.0
    drift_compensation: bool = True
    drift_gate: float = 0.10
    drift_min_points: int = 20
    drift_flatness: float = 0.03


@dataclass(frozen=True)
class ObservationSettings:
    noise: HeightNoiseState = field(default_factory=HeightNoiseState)
    default_height: float = -0.30
    history: int = 10
    blind: bool = False
    dump: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    """A validated scenario with every section turned into the parameters its module takes.

    ``scene`` is the validated scene section; presets are expanded per trial.
    """

    name: str
    kind: str
    seed: int
    scene: dict
    scene_resolution: float
    cameras: tuple
    gait: GaitParams
    odometry_mode: str
    odometry_model: SourceErrorModel
    ekf: EkfParams
    observation: ObservationSettings
    reward: RewardWeights
    filters: FilterParams
    mapping: MappingSettings
    out: Path
    commands: Optional[CommandProfile] = None
    z_drift_rate: float = 0.0
    duration: Optional[float] = None
    distance: float = 4.0
    speed: float = 0.5
    heights: tuple = (0.075, 0.10, 0.125, 0.15, 0.175, 0.20, 0.225, 0.25, 0.275)
    speeds: tuple = (0.5, 1.0)
    tracking_segment: float = 2.0
    settle: float = 0.7
    start: tuple = (1.0, 0.0, 0.0)
    snapshot_every: Optional[float] = None
    success_chamfer_cm: float = 3.0
    region: tuple = (0.5, 0.3)
    rates: Rates = field(default_factory=Rates)
    workers: int = 2

    @property
    def tags(self) -> dict:
        names = [camera.name for camera in self.cameras]
        sensors = '+'.join(names) if 'rear' in names else 'no-rear'
        return {'sensors': sensors, 'odometry': self.odometry_mode}


@dataclass(frozen=True)
class Trial:
    """One seeded rollout of a scenario. ``critical_span`` is the x interval of the terrain
    feature being crossed, or None on flat ground."""

    label: str
    spec: SceneSpec
    profile: CommandProfile
    critical_span: Optional[tuple] = None


@dataclass
class TrialResult:
    trial: Trial
    chamfer: list = field(default_factory=list)
    crossing_chamfer: list = field(default_factory=list)
    missing_chamfer: int = 0
    critical_fills: int = 0
    rte: list = field(default_factory=list)
    tracking: Optional[object] = None
    mean_reward: float = 0.0
    terminated: bool = False
    truncated: bool = False
    frames: int = 0
    control_ticks: int = 0

    def success(self, threshold_cm: float) -> bool:
        """Map-quality proxy for a traversal: the crossing was mapped within ``threshold_cm`` and
        no height sample over the feature fell back to the default fill."""
        if self.truncated or self.terminated or not self.crossing_chamfer:
            return False
        return max(self.crossing_chamfer) <= threshold_cm and self.critical_fills == 0


@dataclass
class RunResult:
    reports: list
    artifacts: list
    trials: list
