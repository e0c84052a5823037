import json
import math
import tempfile
import time
from io import StringIO
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings, tag

from runner.config import apply_overrides, load_scenario, parse_scenario
from runner.exceptions import ConfigError
from runner.models import Trial, TrialResult
from runner.scenario import collect_reports, plan_trials, run_scenario
from scene.models import FlatRegion, SceneSpec
from sensorsim.commands import constant_profile

TINY = {
    'name': 'tiny',
    'kind': 'custom',
    'seed': 4,
    'duration': 1.0,
    'speed': 0.5,
    'scene': {'preset': 'flat', 'extent': [0.0, 4.0, -1.5, 1.5]},
}


def scenario(base=None, **overrides):
    """Scenario config from ``base`` with dotted-path overrides, e.g. ``**{'odometry.mode': 'gt'}``."""
    return parse_scenario(yaml.safe_dump(apply_overrides(base or TINY, overrides)))


def trial_result(label='run', span=(2.0, 2.3), crossing=(1.0, 2.0), fills=0, **fields):
    trial = Trial(label, SceneSpec(primitives=(FlatRegion(z=0.0),)), constant_profile(0.5, 1.0), span)
    values = {'chamfer': [1.0, 2.0], 'rte': [0.05], 'mean_reward': 1.2, **fields}
    return TrialResult(trial=trial, crossing_chamfer=list(crossing), critical_fills=fills, **values)


class ScenarioConfigTests(SimpleTestCase):
    def test_module_defaults(self):
        config = scenario({'seed': 1, 'kind': 'obstacle'})
        self.assertEqual([camera.name for camera in config.cameras], ['front', 'rear'])
        self.assertEqual(config.tags, {'sensors': 'front+rear', 'odometry': 'ekf-vio'})
        self.assertEqual(config.mapping.resolution, 0.025)
        self.assertEqual(config.mapping.length, 5.0)
        self.assertEqual(config.filters.order, ('outliers', 'body', 'voxel'))
        self.assertEqual(config.observation.default_height, -0.30)
        self.assertEqual(config.observation.history, 10)
        self.assertEqual(config.scene['preset'], 'obstacle')
        self.assertEqual(config.ekf.gate, 9.0)
        self.assertEqual(config.out, Path(settings.PERCEPTION['OUTPUT_DIR']) / 'scenario')

    @override_settings(PERCEPTION={**settings.PERCEPTION, 'MAP_RESOLUTION': 0.05, 'VOXEL_SIZE': 0.05})
    def test_defaults_follow_settings(self):
        config = scenario({'seed': 1, 'kind': 'obstacle'})
        self.assertEqual(config.mapping.resolution, 0.05)
        self.assertEqual(config.filters.voxel_size, 0.05)

    def test_rear_camera_disabled(self):
        config = scenario(**{'cameras.rear.enabled': False})
        self.assertEqual([camera.name for camera in config.cameras], ['front'])
        self.assertEqual(config.tags['sensors'], 'no-rear')

    def test_ablation_switches(self):
        config = scenario(**{'observation.history': False, 'observation.height_bias': False,
                             'mapping.drift_compensation': False, 'odometry.z_drift_rate': 0.005})
        self.assertEqual(config.observation.history, 1)
        self.assertEqual(config.observation.noise.bias_sigma, (0.0, 0.0, 0.0))
        self.assertFalse(config.mapping.drift_compensation)
        self.assertEqual(config.z_drift_rate, 0.005)

    def test_needs_a_camera(self):
        with self.assertRaisesRegex(ConfigError, 'cameras'):
            scenario(**{'cameras.front.enabled': False, 'cameras.rear.enabled': False})

    def test_needs_a_seed(self):
        data = {key: value for key, value in TINY.items() if key != 'seed'}
        with self.assertRaisesRegex(ConfigError, 'seed'):
            scenario(data)

    def test_custom_run_needs_commands_or_duration(self):
        data = {key: value for key, value in TINY.items() if key != 'duration'}
        with self.assertRaisesRegex(ConfigError, 'duration'):
            scenario(data)
        config = scenario(data, commands={'segments': [{'vx': 0.5, 'duration': 1.0}, {'wz': 0.5, 'duration': 1.0}]})
        self.assertEqual(config.commands.duration, 2.0)

    def test_step_sweep_builds_steps(self):
        with self.assertRaisesRegex(ConfigError, 'scene.preset'):
            scenario({'seed': 1, 'kind': 'step_sweep', 'scene': {'preset': 'obstacle'}})


class ScenarioDiagnosticsTests(SimpleTestCase):
    def test_field_error_line(self):
        text = "name: bad\nkind: obstacle\nseed: 1\nodometry:\n  mode: teleport\n"
        with self.assertRaises(ConfigError) as caught:
            parse_scenario(text)
        self.assertIn('<scenario>:5: odometry.mode:', str(caught.exception))

    def test_nested_list_error_line(self):
        text = ("seed: 1\n"
                "scene:\n"
                "  primitives:\n"
                "    - kind: flat\n"
                "      z: 0.0\n"
                "    - kind: step\n"
                "      x_start: 1.0\n")
        with self.assertRaises(ConfigError) as caught:
            parse_scenario(text, 'steps.yaml')
        self.assertIn('steps.yaml:6: scene.primitives.1.height:', str(caught.exception))

    def test_syntax_error_position(self):
        with self.assertRaisesRegex(ConfigError, r'^<scenario>:\d+:\d+: '):
            parse_scenario("seed: [1, 2\nname: x\n")

    def test_document_must_be_a_mapping(self):
        with self.assertRaisesRegex(ConfigError, 'must be a mapping'):
            parse_scenario("- 1\n- 2\n")

    def test_missing_file(self):
        with self.assertRaisesRegex(ConfigError, 'cannot read scenario'):
            load_scenario('/nonexistent/scenario.yaml')

    def test_overrides(self):
        data = {'seed': 1, 'odometry': {'mode': 'gt'}}
        merged = apply_overrides(data, {'seed': 9, 'odometry.mode': None, 'cameras.rear.enabled': False})
        self.assertEqual(merged, {'seed': 9, 'odometry': {'mode': 'gt'}, 'cameras': {'rear': {'enabled': False}}})
        self.assertEqual(data, {'seed': 1, 'odometry': {'mode': 'gt'}})

    def test_bundled_scenarios_validate(self):
        for path in sorted((Path(__file__).parent / 'scenarios').glob('*.yaml')):
            with self.subTest(path=path.name):
                self.assertEqual(load_scenario(path).name, path.stem)


class PlanTrialsTests(SimpleTestCase):
    def test_step_sweep(self):
        trials = plan_trials(scenario({'seed': 1, 'kind': 'step_sweep', 'distance': 3.0, 'speed': 0.5}))
        self.assertEqual([t.label for t in trials],
                         ['7.5cm', '10cm', '12.5cm', '15cm', '17.5cm', '20cm', '22.5cm', '25cm', '27.5cm'])
        self.assertEqual(trials[-1].spec.primitives[1].height, 0.275)
        self.assertEqual(trials[0].critical_span, (2.0, 2.3))
        self.assertAlmostEqual(trials[0].profile.duration, 6.0)

    def test_obstacle_speeds(self):
        trials = plan_trials(scenario({'seed': 1, 'kind': 'obstacle', 'speeds': [0.5, 1.0], 'distance': 4.0}))
        self.assertEqual([t.label for t in trials], ['0.5mps', '1mps'])
        self.assertEqual([t.profile.duration for t in trials], [8.0, 4.0])
        self.assertAlmostEqual(trials[0].critical_span[0], 2.0)
        self.assertAlmostEqual(trials[0].critical_span[1], 4.4)

    def test_tracking_grid(self):
        trials = plan_trials(scenario({'seed': 1, 'kind': 'tracking_sweep'}))
        self.assertEqual(len(trials), 45)
        self.assertEqual(len({t.label for t in trials}), 45)
        self.assertTrue(all(t.profile.duration == 2.0 and t.critical_span is None for t in trials))
        self.assertEqual(trials[0].label, 'vx-1_vy-0.5_wz-1')

    def test_custom_run(self):
        trials = plan_trials(scenario())
        self.assertEqual(len(trials), 1)
        self.assertIsNone(trials[0].critical_span)
        self.assertEqual(trials[0].profile.duration, 1.0)


class ReportCollectionTests(SimpleTestCase):
    def test_success_proxy(self):
        self.assertTrue(trial_result().success(3.0))
        self.assertFalse(trial_result(crossing=(1.0, 7.0)).success(3.0))
        self.assertFalse(trial_result(crossing=(1.0, math.inf)).success(3.0))
        self.assertFalse(trial_result(fills=1).success(3.0))
        self.assertFalse(trial_result(crossing=()).success(3.0))
        self.assertFalse(trial_result(truncated=True).success(3.0))

    def test_one_row_set_per_step_height(self):
        config = scenario({'seed': 1, 'kind': 'step_sweep', 'heights': [0.1, 0.2]})
        reports = collect_reports(config, [trial_result('10cm'), trial_result('20cm', fills=3)])
        keys = [report.key for report in reports]
        self.assertEqual(keys, ['chamfer[10cm]', 'rte[10cm]', 'reward[10cm]', 'success[10cm]',
                                'chamfer[20cm]', 'rte[20cm]', 'reward[20cm]', 'success[20cm]'])
        self.assertEqual(reports[3].values, [1.0])
        self.assertEqual(reports[7].values, [0.0])

    def test_pooled_reports(self):
        config = scenario({'seed': 1, 'kind': 'obstacle'})
        reports = collect_reports(config, [trial_result(), trial_result(rte=[])])
        by_key = {report.key: report for report in reports}
        self.assertEqual(by_key['chamfer'].values, [1.0, 2.0, 1.0, 2.0])
        self.assertEqual(by_key['rte'].missing, 1)
        self.assertEqual(by_key['success'].mean, 1.0)
        self.assertEqual(by_key['chamfer'].tags, {'sensors': 'front+rear', 'odometry': 'ekf-vio'})


class RunScenarioTests(SimpleTestCase):
    def run_tiny(self, out, **overrides):
        return run_scenario(scenario(out=str(out), **overrides))

    def test_rates_and_outputs(self):
        with tempfile.TemporaryDirectory() as tmp:
            result = self.run_tiny(tmp)
            trial = result.trials[0]
            self.assertEqual(trial.control_ticks, 51)
            self.assertEqual(trial.frames, 31)
            self.assertEqual(len(trial.chamfer) + trial.missing_chamfer, 21)
            self.assertTrue(trial.chamfer)
            self.assertEqual([report.key for report in result.reports], ['chamfer', 'rte', 'reward'])
            for name in ('metrics.csv', 'metrics.json', 'trials.csv', 'trials/run/odometry.csv',
                         'trials/run/rewards.csv'):
                self.assertTrue((Path(tmp) / name).exists(), name)
            rewards = pd.read_csv(Path(tmp) / 'trials/run/rewards.csv')
            self.assertEqual(len(rewards), 51)

    def test_same_seed_same_metrics(self):
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            self.run_tiny(first)
            self.run_tiny(second)
            self.assertEqual((Path(first) / 'metrics.csv').read_bytes(), (Path(second) / 'metrics.csv').read_bytes())
            self.assertEqual(json.loads((Path(first) / 'metrics.json').read_text()),
                             json.loads((Path(second) / 'metrics.json').read_text()))

    def test_front_only_run_is_tagged(self):
        with tempfile.TemporaryDirectory() as tmp:
            result = self.run_tiny(tmp, **{'cameras.rear.enabled': False})
            table = pd.read_csv(Path(tmp) / 'metrics.csv')
            self.assertEqual(set(table['sensors']), {'no-rear'})
            self.assertEqual(result.trials[0].control_ticks, 51)

    def test_snapshots_and_observation_dump(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.run_tiny(tmp, snapshot_every=0.5, **{'observation.dump': True})
            snapshots = Path(tmp) / 'trials/run/snapshots'
            self.assertEqual(len(list(snapshots.glob('map_*.csv'))), 3)
            self.assertEqual(len(list(snapshots.glob('cloud_*.xyz'))), 3)
            observations = pd.read_csv(Path(tmp) / 'trials/run/observations.csv')
            self.assertEqual(observations.shape, (51, 1 + 107))

    def test_single_frame_history_and_blind_map(self):
        with tempfile.TemporaryDirectory() as tmp:
            result = self.run_tiny(tmp, **{'observation.history': False, 'observation.blind': True,
                                           'observation.dump': True})
            observations = pd.read_csv(Path(tmp) / 'trials/run/observations.csv')
            heights = observations[[f'h_{i:02d}' for i in range(77)]].to_numpy()
            np.testing.assert_array_equal(heights, np.full(heights.shape, -0.30))
            self.assertEqual(result.trials[0].control_ticks, 51)


class CommandTests(SimpleTestCase):
    def write(self, directory, **overrides):
        path = Path(directory) / 'tiny.yaml'
        path.write_text(yaml.safe_dump(apply_overrides(TINY, overrides)))
        return str(path)

    def test_run_and_compare(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = self.write(tmp)
            for name in ('a', 'b'):
                call_command('run', '--config', config, '--out', str(Path(tmp) / name), '--no-progress',
                             '--odometry', 'gt', '--seed', '2', stdout=StringIO())
            stdout = StringIO()
            call_command('compare', str(Path(tmp) / 'a'), str(Path(tmp) / 'b'),
                         '--out', str(Path(tmp) / 'table.csv'), stdout=stdout)
            self.assertIn('delta_b_%', stdout.getvalue())
            table = pd.read_csv(Path(tmp) / 'table.csv', index_col='metric')
            self.assertEqual(table.loc['chamfer', 'delta_b_%'], 0.0)
            self.assertEqual(set(pd.read_csv(Path(tmp) / 'a' / 'metrics.csv')['odometry']), {'gt'})

    def test_run_without_rear_camera(self):
        with tempfile.TemporaryDirectory() as tmp:
            stdout = StringIO()
            call_command('run', '--config', self.write(tmp), '--out', str(Path(tmp) / 'run'), '--no-rear-camera',
                         '--no-progress', stdout=stdout)
            self.assertIn('chamfer', stdout.getvalue())
            self.assertEqual(set(pd.read_csv(Path(tmp) / 'run' / 'metrics.csv')['sensors']), {'no-rear'})

    def test_invalid_scenario_fails(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaisesRegex(CommandError, r'tiny.yaml:\d+: odometry.mode'):
                call_command('run', '--config', self.write(tmp, **{'odometry.mode': 'teleport'}),
                             '--no-progress', stdout=StringIO())

    def test_compare_needs_two_runs(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError):
                call_command('compare', tmp, stdout=StringIO())

    def test_export_scene(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'sweep.yaml'
            path.write_text(yaml.safe_dump({'seed': 1, 'kind': 'step_sweep', 'heights': [0.1, 0.2]}))
            call_command('export_scene', '--config', str(path), '--out', str(Path(tmp) / 'scenes'), stdout=StringIO())
            self.assertEqual(sorted(p.name for p in (Path(tmp) / 'scenes').iterdir()),
                             ['scene_10cm.csv', 'scene_20cm.csv'])


@tag('slow')
class AcceptanceTests(SimpleTestCase):
    OBSTACLE = {
        'name': 'obstacle',
        'kind': 'obstacle',
        'seed': 1,
        'speeds': [0.5],
        'distance': 3.5,
        'scene': {'preset': 'obstacle'},
        'cameras': {'front': {'noiseless': True}, 'rear': {'noiseless': True}},
        'odometry': {'mode': 'gt'},
    }

    def mean_chamfer(self, base, **overrides):
        with tempfile.TemporaryDirectory() as tmp:
            result = run_scenario(scenario(base, out=tmp, **overrides))
        return next(r for r in result.reports if r.metric == 'chamfer').mean

    def test_ground_truth_mapping_fidelity(self):
        self.assertLessEqual(self.mean_chamfer(self.OBSTACLE), 1.5)

    # a slow walk up the steps; the region under the robot is only seen by the front camera
    # while still ahead of it, so without the tail camera it is stale by seconds
    STEPS = {'speeds': [0.15], 'start': [1.5, 0.0, 0.0], 'distance': 1.5, 'odometry.z_drift_rate': 0.005,
             'gait.phase_jitter': 1.0}

    def test_drift_compensation(self):
        stale = apply_overrides(self.OBSTACLE, {**self.STEPS, 'cameras.rear.enabled': False})
        compensated, drifting = [], []
        for seed in (1, 2, 3):
            compensated.append(self.mean_chamfer(stale, seed=seed))
            drifting.append(self.mean_chamfer(stale, seed=seed, **{'mapping.drift_compensation': False}))
        self.assertLessEqual(np.mean(compensated), 0.7 * np.mean(drifting))

    def test_rear_camera_under_drift(self):
        drifting = apply_overrides(self.OBSTACLE, {
            **self.STEPS, 'cameras': {}, 'odometry.mode': 'ekf-novio', 'mapping.drift_compensation': False,
        })
        both, front = [], []
        for seed in (1, 2, 3):
            both.append(self.mean_chamfer(drifting, seed=seed))
            front.append(self.mean_chamfer(drifting, seed=seed, **{'cameras.rear.enabled': False}))
            self.assertLess(both[-1], front[-1], f'seed {seed}')
        self.assertLessEqual(np.mean(both), 0.9 * np.mean(front))

    def test_vio_lowers_trajectory_error(self):
        walk = apply_overrides(TINY, {'duration': 10.0, 'scene.extent': [0.0, 7.0, -1.5, 1.5],
                                      'cameras.rear.enabled': False})
        for seed in (1, 2, 3):
            errors = {}
            for mode in ('ekf-vio', 'ekf-novio'):
                with tempfile.TemporaryDirectory() as tmp:
                    result = run_scenario(scenario(walk, out=tmp, seed=seed, **{'odometry.mode': mode}))
                errors[mode] = next(r for r in result.reports if r.metric == 'rte').mean
                self.assertTrue(0.02 <= errors[mode] <= 0.15, f'{mode} seed {seed}: {errors[mode]:.4f} m')
            self.assertLess(errors['ekf-vio'], errors['ekf-novio'], f'seed {seed}')

    def test_full_obstacle_run_budget(self):
        path = Path(__file__).parent / 'scenarios' / 'obstacle.yaml'
        with tempfile.TemporaryDirectory() as tmp:
            config = load_scenario(path, {'speeds': [0.25], 'duration': 20.0,
                                          'scene.extent': [0.0, 7.0, -1.5, 1.5], 'out': tmp})
            start = time.perf_counter()
            result = run_scenario(config)
            elapsed = time.perf_counter() - start
        self.assertEqual(result.trials[0].control_ticks, 1001)
        self.assertLess(elapsed, 120.0)

    def test_step_sweep_rows(self):
        sweep = {'name': 'sweep', 'kind': 'step_sweep', 'seed': 2, 'heights': [0.075, 0.275], 'distance': 2.0}
        with tempfile.TemporaryDirectory() as tmp:
            run_scenario(scenario(sweep, out=tmp))
            table = pd.read_csv(Path(tmp) / 'metrics.csv')
        success = table[table['metric'] == 'success']
        self.assertEqual(list(success['label']), ['7.5cm', '27.5cm'])
        self.assertTrue(set(success['mean']) <= {0.0, 1.0})
