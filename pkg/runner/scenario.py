# runner/scenario.py
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
import pandas as pd
from tqdm import tqdm

from Legged_perception.seeding import substream
from cloudfilter.filters import apply_filters
from cloudfilter.models import BodyModel, PointCloud
from elevmap.grid import ElevationMap
from elevmap.models import SensorVarianceModel
from evaluation.exceptions import MetricError
from evaluation.metrics import map_vs_ground_truth, rte, tracking_rms
from evaluation.models import MetricReport
from evaluation.reports import write_reports
from obsbuilder.assembly import assemble_inputs, observations_to_csv, push_and_flatten
from obsbuilder.heights import apply_height_noise, sample_heights, sample_positions
from obsbuilder.models import (FRAME_LENGTH, HEIGHT_SAMPLES, TARGETS_LENGTH, EstimationTargets, HistoryBuffer,
                               ObservationFrame)
from odometry.fusion import estimate_odometry
from odometry.models import OdometryTrack
from reward.episode import RewardEpisode
from runner.exceptions import RunError
from runner.models import RunResult, Trial, TrialResult
from scene.builder import build_scene, obstacle_scene, step_scene
from scene.models import FlatRegion, Platform, SceneSpec, Step
from scene.serializers import SceneSpecSerializer
from sensorsim.camera import inject_sensor_noise, render_depth
from sensorsim.commands import constant_profile, tracking_grid_profile
from sensorsim.models import CommandProfile
from sensorsim.trajectory import simulate_trajectory

logger = logging.getLogger(__name__)

VARIANCE_MODELS = {
    'front': SensorVarianceModel.front_stereo(),
    'rear': SensorVarianceModel.rear_tof(),
}

# events sharing a simulation step run clouds first, so the map a tick reads is current
CLOUD, CONTROL, CHAMFER = range(3)


def _seed(seed: int, name: str) -> int:
    return int(substream(seed, name).integers(2 ** 32))


def _critical_span(spec: SceneSpec):
    features = [p.span() for p in spec.primitives if isinstance(p, (Step, Platform))]
    if not features:
        return None
    return min(lo for lo, _ in features), max(hi for _, hi in features)


def _scene_spec(cfg, height=None) -> SceneSpec:
    scene = cfg.scene
    x_min, x_max, y_min, y_max = scene['extent']
    extent = dict(x_min=x_min, x_max=x_max, y_min=y_min, y_max=y_max, base_height=scene['base_height'])
    preset = scene['preset']
    if preset == 'custom':
        return SceneSpecSerializer().create(scene)
    if preset == 'flat':
        return SceneSpec(primitives=(FlatRegion(z=0.0),), **extent)
    if preset == 'step':
        return step_scene(cfg.heights[0] if height is None else height, x_start=scene['obstacle_x'], **extent)
    return obstacle_scene(x_start=scene['obstacle_x'], **extent)


def _walk(cfg, speed: float) -> CommandProfile:
    return constant_profile(speed, cfg.duration or cfg.distance / abs(speed))


def plan_trials(cfg) -> list:
    """The rollouts a scenario is made of, in the order they run and are reported."""
    if cfg.kind == 'step_sweep':
        trials = []
        for height in cfg.heights:
            spec = _scene_spec(cfg, height)
            trials.append(Trial(f'{round(height * 100, 3):g}cm', spec, _walk(cfg, cfg.speed), _critical_span(spec)))
        return trials

    spec = _scene_spec(cfg)
    span = _critical_span(spec)
    if cfg.kind == 'obstacle':
        return [Trial(f'{speed:g}mps', spec, _walk(cfg, speed), span) for speed in cfg.speeds]
    if cfg.kind == 'tracking_sweep':
        grid = tracking_grid_profile(cfg.tracking_segment)
        return [Trial(f'vx{s.vx:+g}_vy{s.vy:+g}_wz{s.wz:+g}', spec, CommandProfile((s,)), span)
                for s in grid.segments]
    profile = cfg.commands if cfg.commands is not None else _walk(cfg, cfg.speed)
    return [Trial('run', spec, profile, span)]


def _ticks(t_end: float, rate: float, sim_rate: float, kind: int) -> list:
    count = int(math.floor(t_end * rate + 1e-9)) + 1
    return [(int(round(k * sim_rate / rate)), kind) for k in range(count)]


def _over(positions, span) -> np.ndarray:
    return (positions[:, 0] >= span[0]) & (positions[:, 0] < span[1])


class TrialRunner:
    """One rollout through the whole pipeline.

    The ground-truth trajectory is simulated at the sim rate; depth frames, control ticks and
    chamfer windows are taken from it at their own rates. The map lives in the odometry frame.
    """

    def __init__(self, cfg, trial: Trial, out_dir=None):
        self.cfg = cfg
        self.trial = trial
        self.out_dir = out_dir
        self.artifacts = []
        self.result = TrialResult(trial=trial)

        seed, label = cfg.seed, trial.label
        self.hf = build_scene(trial.spec, cfg.scene_resolution)
        self.dt = 1.0 / cfg.rates.sim
        trajectory = simulate_trajectory(trial.profile, self.hf, self.dt, cfg.gait,
                                         seed=_seed(seed, f'{label}/gait'), start=cfg.start)
        if not len(trajectory):
            raise RunError(f"trial {label}: the robot starts outside the scene")
        if trajectory.truncated:
            logger.warning("trial %s: robot left the scene at t=%.2f s; the rollout is cut short",
                           label, trajectory.states[-1].t)
        self.result.truncated = trajectory.truncated
        self.states = trajectory.states
        self.track = estimate_odometry(
            self.states, cfg.odometry_mode, cfg.odometry_model, cfg.ekf, seed=_seed(seed, f'{label}/odometry'),
            z_drift_rate=cfg.z_drift_rate, rates=(cfg.rates.estimator, cfg.rates.imu, cfg.rates.vio),
        )

        self.body = BodyModel.go1(margin=cfg.filters.body_margin)
        self.map = ElevationMap(cfg.mapping.resolution, cfg.mapping.length,
                                center=self.track.positions[0, :2])
        self.camera_rngs = {c.name: substream(seed, f'{label}/camera/{c.name}') for c in cfg.cameras}
        self.height_rng = substream(seed, f'{label}/heights')
        self.noise = replace(cfg.observation.noise, bias=np.zeros(3), last_resample=-math.inf)
        self.history = HistoryBuffer(cfg.observation.history)
        self.episode = RewardEpisode(self.hf, cfg.reward, body=self.body, kp=cfg.gait.kp, kd=cfg.gait.kd,
                                     action_scale=cfg.gait.action_scale)
        self.observed_times, self.observed_frames = [], []
        self.next_snapshot = 0.0 if cfg.snapshot_every else math.inf

    def _state(self, index: int):
        return self.states[min(index, len(self.states) - 1)]

    def events(self) -> list:
        t_end = self.states[-1].t
        rates = self.cfg.rates
        events = (_ticks(t_end, rates.cloud, rates.sim, CLOUD) + _ticks(t_end, rates.control, rates.sim, CONTROL)
                  + _ticks(t_end, rates.chamfer, rates.sim, CHAMFER))
        return sorted(e for e in events if e[0] < len(self.states))

    def run(self) -> TrialResult:
        with ThreadPoolExecutor(max_workers=self.cfg.workers, thread_name_prefix='render') as pool:
            for index, kind in self.events():
                if kind == CLOUD:
                    self.cloud_frame(pool, index)
                elif kind == CONTROL:
                    self.control_tick(index)
                else:
                    self.chamfer_window(index)
        self.finish()
        return self.result

    def cloud_frame(self, pool, index: int) -> None:
        state = self._state(index)
        cameras = self.cfg.cameras
        # renderers share the immutable state and terrain; map() keeps the camera order
        raw = list(pool.map(lambda camera: render_depth(camera, state, self.hf), cameras))

        odom_pose = self.track.pose_at(state.t)
        odom_state = replace(state, position=odom_pose.position, orientation=odom_pose.orientation)
        self.map.recenter(odom_pose.position[:2])
        filtered = []
        for camera, cloud in zip(cameras, raw):
            cloud = inject_sensor_noise(cloud, camera, self.camera_rngs[camera.name])
            sensor_pose = odom_pose * camera.mount_pose
            cloud = cloud.transformed(sensor_pose.rotation, sensor_pose.position, 'odom')
            filtered.append((camera, sensor_pose, apply_filters(cloud, odom_state, self.body, self.cfg.filters)))
        merged = PointCloud.concatenate([cloud for _, _, cloud in filtered], 'odom')

        # one shift per frame from every camera, taken before any of the frame's points land
        mapping = self.cfg.mapping
        if mapping.drift_compensation:
            self.map.drift_compensate(merged, mapping.drift_gate, mapping.drift_min_points, mapping.drift_flatness)
        for camera, sensor_pose, cloud in filtered:
            self.map.integrate_cloud(cloud, sensor_pose.position, VARIANCE_MODELS[camera.name], state.t)
        self.result.frames += 1

        if state.t >= self.next_snapshot - 1e-9 and self.out_dir is not None:
            stamp = int(round(state.t * 1000))
            snapshots = self.out_dir / 'snapshots'
            snapshots.mkdir(parents=True, exist_ok=True)
            self.artifacts.append(self.map.to_csv(snapshots / f'map_{stamp:06d}.csv'))
            cloud_path = snapshots / f'cloud_{stamp:06d}.xyz'
            merged.to_xyz(cloud_path)
            self.artifacts.append(cloud_path)
            self.next_snapshot += self.cfg.snapshot_every

    def _heights(self, odom_pose, t: float):
        settings = self.cfg.observation
        positions = sample_positions(odom_pose)
        if settings.blind:
            return np.full(HEIGHT_SAMPLES, settings.default_height), np.zeros(HEIGHT_SAMPLES, dtype=bool)
        _, available = self.map.query_heights(positions[:, 0], positions[:, 1])
        heights = sample_heights(self.map, odom_pose, settings.default_height)
        noisy = apply_height_noise(heights, positions, self.noise, t, self.map, self.height_rng,
                                   base_height=odom_pose.position[2], default_height=settings.default_height)
        return noisy, available

    def _estimated(self, state, odom_pose) -> EstimationTargets:
        world = np.array([np.interp(state.t, self.track.times, self.track.velocities[:, axis]) for axis in range(3)])
        return EstimationTargets(linear_velocity=odom_pose.rotation.inv().apply(world), friction=1.0,
                                 contacts=np.asarray(state.foot_contacts, dtype=bool))

    def control_tick(self, index: int) -> None:
        state = self._state(index)
        command = self.trial.profile.command_at(state.t)
        odom_pose = self.track.pose_at(state.t)
        heights, available = self._heights(odom_pose, state.t)
        if self.trial.critical_span is not None:
            over = _over(sample_positions(state.pose), self.trial.critical_span)
            self.result.critical_fills += int(np.count_nonzero(over & ~available))

        frame = ObservationFrame.from_state(state, command, heights)
        observation = push_and_flatten(self.history, frame)
        inputs = assemble_inputs(observation, self._estimated(state, odom_pose), EstimationTargets.from_state(state))
        expected = self.history.capacity * FRAME_LENGTH + TARGETS_LENGTH
        if len(inputs.actor) != expected:
            raise RunError(f"actor input holds {len(inputs.actor)} values at t={state.t:.3f}, expected {expected}")
        if self.cfg.observation.dump:
            self.observed_times.append(state.t)
            self.observed_frames.append(frame)

        # the action is the joint target the gait reaches at the next control tick
        gait = self.cfg.gait
        step = int(round(self.cfg.rates.sim / self.cfg.rates.control))
        target = self._state(index + step).joint_positions
        action = (target - np.asarray(gait.q_default)) / gait.action_scale
        self.episode.step(state, command, action)
        self.result.control_ticks += 1

    def chamfer_window(self, index: int) -> None:
        state = self._state(index)
        odom_pose = self.track.pose_at(state.t)
        try:
            value = map_vs_ground_truth(self.map, self.hf, state.pose, map_pose=odom_pose, region=self.cfg.region)
        except MetricError as exc:
            logger.debug("chamfer window at t=%.2f skipped: %s", state.t, exc)
            value = None
        if value is None:
            self.result.missing_chamfer += 1
        else:
            self.result.chamfer.append(value)

        span = self.trial.critical_span
        half = self.cfg.region[0] / 2.0
        if span is not None and state.position[0] + half >= span[0] and state.position[0] - half < span[1]:
            self.result.crossing_chamfer.append(math.inf if value is None else value)

    def finish(self) -> None:
        result, label = self.result, self.trial.label
        truth = OdometryTrack.from_trajectory(self.states)
        try:
            result.rte = rte(self.track, truth).values
        except MetricError as exc:
            logger.info("trial %s: no trajectory error, %s", label, exc)
        if self.cfg.kind == 'tracking_sweep':
            try:
                result.tracking = tracking_rms(self.states, self.trial.profile, settle=self.cfg.settle,
                                               segment=self.cfg.tracking_segment)
            except MetricError as exc:
                logger.warning("trial %s: no tracking error, %s", label, exc)
        result.mean_reward = self.episode.mean_total()
        result.terminated = self.episode.terminated

        if self.out_dir is not None:
            self.artifacts.append(self.track.to_csv(self.out_dir / 'odometry.csv'))
            self.artifacts.append(self.episode.to_csv(self.out_dir / 'rewards.csv'))
            if self.observed_frames:
                self.artifacts.append(observations_to_csv(self.observed_times, self.observed_frames,
                                                          self.out_dir / 'observations.csv'))
        logger.info("trial %s: %d frames, %d control ticks, chamfer %.3f cm over %d windows",
                    label, result.frames, result.control_ticks,
                    float(np.mean(result.chamfer)) if result.chamfer else math.nan, len(result.chamfer))


def run_trial(cfg, trial: Trial, out_dir=None):
    """Run one trial; returns the TrialResult and the artifact paths it wrote."""
    runner = TrialRunner(cfg, trial, out_dir)
    result = runner.run()
    return result, runner.artifacts


def _reports(cfg, results, label: str) -> list:
    tags = cfg.tags
    chamfer = MetricReport('chamfer', 'cm', label=label, tags=dict(tags))
    trajectory = MetricReport('rte', 'm', label=label, tags=dict(tags))
    reward = MetricReport('reward', '', label=label, tags=dict(tags))
    reports = [chamfer, trajectory, reward]
    for result in results:
        chamfer.values.extend(result.chamfer)
        chamfer.missing += result.missing_chamfer
        if result.rte:
            trajectory.values.extend(result.rte)
        else:
            trajectory.add(None)
        reward.add(result.mean_reward)

    if any(r.trial.critical_span is not None for r in results):
        success = MetricReport('success', 'rate (map-quality proxy)', label=label, tags=dict(tags))
        for result in results:
            success.add(1.0 if result.success(cfg.success_chamfer_cm) else 0.0)
        reports.append(success)

    if cfg.kind == 'tracking_sweep':
        for axis in ('vx', 'vy', 'wz'):
            unit = 'rad/s' if axis == 'wz' else 'm/s'
            report = MetricReport('tracking_rms', unit, label=f'{label}{axis}', tags=dict(tags))
            for result in results:
                report.add(None if result.tracking is None else getattr(result.tracking, axis))
            reports.append(report)
    return reports


def collect_reports(cfg, results) -> list:
    """Metric reports of a run: one set per step height in a step sweep, pooled otherwise."""
    if cfg.kind == 'step_sweep':
        return [report for result in results for report in _reports(cfg, [result], result.trial.label)]
    return _reports(cfg, results, '')


def _trial_table(cfg, results) -> pd.DataFrame:
    return pd.DataFrame([{
        'trial': r.trial.label,
        'frames': r.frames,
        'control_ticks': r.control_ticks,
        'chamfer_windows': len(r.chamfer),
        'missing_windows': r.missing_chamfer,
        'critical_fills': r.critical_fills,
        'mean_reward': r.mean_reward,
        'terminated': r.terminated,
        'truncated': r.truncated,
        'success': r.success(cfg.success_chamfer_cm) if r.trial.critical_span is not None else None,
    } for r in results])


def run_scenario(cfg, progress: bool = False) -> RunResult:
    """Run every trial of a scenario and write its reports into ``cfg.out``.

    metrics.csv and metrics.json hold the MetricReports, trials.csv one row per trial; odometry,
    reward and optional observation logs and map/cloud snapshots go under ``trials/<label>/``.
    """
    trials = plan_trials(cfg)
    logger.info("scenario %s: %d trials, sensors %s, odometry %s", cfg.name, len(trials),
                cfg.tags['sensors'], cfg.odometry_mode)
    cfg.out.mkdir(parents=True, exist_ok=True)
    results, artifacts = [], []
    for trial in tqdm(trials, desc=cfg.name, unit='trial', disable=not progress):
        result, written = run_trial(cfg, trial, cfg.out / 'trials' / trial.label)
        results.append(result)
        artifacts.extend(written)

    reports = collect_reports(cfg, results)
    artifacts.extend(write_reports(reports, cfg.out))
    trials_path = cfg.out / 'trials.csv'
    _trial_table(cfg, results).to_csv(trials_path, index=False, float_format='%.9g')
    artifacts.append(trials_path)
    return RunResult(reports=reports, artifacts=artifacts, trials=results)
