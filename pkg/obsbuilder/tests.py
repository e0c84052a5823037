import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.spatial.transform import Rotation

from cloudfilter.models import PointCloud
from elevmap.grid import ElevationMap
from elevmap.models import SensorVarianceModel
from obsbuilder.assembly import assemble_inputs, observations_to_csv, push_and_flatten
from obsbuilder.heights import LOCAL_GRID, apply_height_noise, sample_heights, sample_positions
from obsbuilder.models import EstimationTargets, HeightNoiseState, HistoryBuffer, ObservationFrame
from obsbuilder.serializers import ObservationSerializer
from scene.models import Pose
from sensorsim.models import RobotState


def mapped(height_of, length=2.0):
    """Map with one exact measurement per cell, height given as a function of the cell center."""
    grid = ElevationMap(resolution=0.025, length=length)
    ix, iy = np.meshgrid(np.arange(grid.size), np.arange(grid.size), indexing='ij')
    cx, cy = grid.cell_center(ix.ravel(), iy.ravel())
    points = np.column_stack([cx, cy, height_of(cx, cy)])
    grid.integrate_cloud(PointCloud(t=0.0, frame='odom', points=points), (0.0, 0.0, 1.0),
                         SensorVarianceModel(base_variance=1e-4), 0.0)
    return grid


def frame(vx=0.0, heights=None):
    return ObservationFrame(command=(vx, 0.0, 0.0), joint_positions=np.zeros(12), joint_velocities=np.zeros(12),
                            projected_gravity=(0.0, 0.0, -1.0),
                            heights=np.full(77, -0.3) if heights is None else heights)


class SampleHeightsTests(SimpleTestCase):
    def test_flat_map_at_nominal_height(self):
        grid = mapped(lambda x, y: np.zeros_like(x))
        heights = sample_heights(grid, Pose.from_xyz_yaw(0.0, 0.0, 0.30), default_height=-0.30)
        self.assertEqual(heights.shape, (77,))
        np.testing.assert_allclose(heights, -0.30, atol=1e-15)

    def test_translation_over_flat_ground(self):
        grid = mapped(lambda x, y: np.full_like(x, 0.05))
        a = sample_heights(grid, Pose.from_xyz_yaw(0.1, -0.2, 0.35))
        b = sample_heights(grid, Pose.from_xyz_yaw(-0.3, 0.25, 0.35, yaw=1.0))
        np.testing.assert_allclose(a, -0.30, atol=1e-12)
        np.testing.assert_array_equal(a, b)

    def test_empty_map_takes_default(self):
        heights = sample_heights(ElevationMap(length=2.0), Pose.from_xyz_yaw(0.0, 0.0, 0.3), default_height=-0.42)
        np.testing.assert_array_equal(heights, np.full(77, -0.42))

    def test_partially_seen_map(self):
        grid = mapped(lambda x, y: np.zeros_like(x), length=0.4)
        heights = sample_heights(grid, Pose.from_xyz_yaw(0.0, 0.0, 0.3), default_height=-1.0).reshape(11, 7)
        np.testing.assert_array_equal(heights[0], np.full(7, -1.0))
        np.testing.assert_allclose(heights[5], -0.3)

    def test_positions_rotate_with_yaw(self):
        pose = Pose.from_xyz_yaw(1.0, 2.0, 0.3, yaw=np.pi / 2)
        expected = Rotation.from_euler('z', np.pi / 2).apply(LOCAL_GRID)[:, :2] + [1.0, 2.0]
        np.testing.assert_allclose(sample_positions(pose), expected, atol=1e-12)

    def test_grid_extent(self):
        positions = sample_positions(Pose.from_xyz_yaw(0.0, 0.0))
        np.testing.assert_allclose(positions.min(axis=0), [-0.25, -0.15])
        np.testing.assert_allclose(positions.max(axis=0), [0.25, 0.15])

    def test_yawed_base_sees_raised_side_ahead(self):
        grid = mapped(lambda x, y: np.where(y > 0, 0.1, 0.0))
        # sample positions on cell centers
        heights = sample_heights(grid, Pose.from_xyz_yaw(0.0125, 0.0125, 0.3, yaw=np.pi / 2)).reshape(11, 7)
        np.testing.assert_allclose(heights[5:], -0.2, atol=1e-12)
        np.testing.assert_allclose(heights[:5], -0.3, atol=1e-12)


class HeightNoiseTests(SimpleTestCase):
    def test_noiseless_is_identity(self):
        samples = np.random.default_rng(0).uniform(-0.5, 0.0, 77)
        state = HeightNoiseState(sample_sigma=0.0, bias_sigma=(0.0, 0.0, 0.0))
        out = apply_height_noise(samples, np.zeros((77, 2)), state, 0.0, ElevationMap(length=1.0),
                                 np.random.default_rng(1))
        np.testing.assert_array_equal(out, samples)

    def test_bias_held_for_seven_seconds(self):
        state = HeightNoiseState()
        grid = ElevationMap(length=1.0)
        rng = np.random.default_rng(5)
        biases = []
        for k in range(351):
            apply_height_noise(np.zeros(77), np.zeros((77, 2)), state, k * 0.02, grid, rng)
            biases.append(state.bias.copy())
        for bias in biases[1:350]:
            np.testing.assert_array_equal(bias, biases[0])
        self.assertFalse(np.array_equal(biases[350], biases[0]))

    def test_xy_bias_moves_the_edge(self):
        grid = mapped(lambda x, y: np.where(x > 0.1, 0.2, 0.0))
        pose = Pose.from_xyz_yaw(0.0125, 0.0125, 0.3)
        state = HeightNoiseState(sample_sigma=0.0, bias_sigma=(0.0, 0.0, 0.0), bias=(0.05, 0.0, 0.0),
                                 last_resample=0.0)
        clean = sample_heights(grid, pose)
        noisy = apply_height_noise(clean, sample_positions(pose), state, 0.0, grid, np.random.default_rng(0),
                                   base_height=0.3)
        np.testing.assert_array_equal(noisy, sample_heights(grid, Pose.from_xyz_yaw(0.0625, 0.0125, 0.3)))

        def first_raised_row(values):
            return int(np.argmax(values.reshape(11, 7)[:, 0] > -0.25))

        # 0.05 m is two cells of the map
        self.assertEqual(first_raised_row(clean) - first_raised_row(noisy), 1)

    def test_z_bias_is_additive(self):
        state = HeightNoiseState(sample_sigma=0.0, bias_sigma=(0.0, 0.0, 0.0), bias=(0.0, 0.0, 0.02),
                                 last_resample=0.0)
        out = apply_height_noise(np.full(77, -0.3), np.zeros((77, 2)), state, 1.0, ElevationMap(length=1.0),
                                 np.random.default_rng(0))
        np.testing.assert_allclose(out, -0.28)

    def test_same_seed_same_noise(self):
        grid = mapped(lambda x, y: np.zeros_like(x))
        pose = Pose.from_xyz_yaw(0.0, 0.0, 0.3)
        samples = sample_heights(grid, pose)
        runs = []
        for _ in range(2):
            state, rng = HeightNoiseState(), np.random.default_rng(9)
            runs.append([apply_height_noise(samples, sample_positions(pose), state, k * 0.02, grid, rng,
                                            base_height=0.3) for k in range(5)])
        np.testing.assert_array_equal(runs[0], runs[1])

    def test_period_must_be_positive(self):
        with self.assertRaises(ValueError):
            HeightNoiseState(period=0.0)


class HistoryTests(SimpleTestCase):
    def test_identical_frames_repeat(self):
        buffer = HistoryBuffer()
        for _ in range(10):
            flat = push_and_flatten(buffer, frame(0.3))
        self.assertEqual(len(flat), 1070)
        np.testing.assert_array_equal(flat, np.tile(frame(0.3).vector(), 10))

    def test_newest_frame_last(self):
        buffer = HistoryBuffer()
        for _ in range(10):
            push_and_flatten(buffer, frame(0.0))
        flat = push_and_flatten(buffer, frame(1.0))
        np.testing.assert_array_equal(flat[-107:], frame(1.0).vector())
        self.assertEqual(len(flat), 1070)

    def test_ring_keeps_last_ten(self):
        buffer = HistoryBuffer()
        for i in range(1, 16):
            push_and_flatten(buffer, frame(float(i)))
        self.assertEqual([f.command[0] for f in buffer.frames], [float(i) for i in range(6, 16)])

    def test_cold_buffer_replicates_earliest(self):
        buffer = HistoryBuffer()
        push_and_flatten(buffer, frame(0.5))
        flat = push_and_flatten(buffer, frame(1.0))
        expected = np.concatenate([np.tile(frame(0.5).vector(), 9), frame(1.0).vector()])
        np.testing.assert_array_equal(flat, expected)

    def test_history_of_one(self):
        buffer = HistoryBuffer(capacity=1)
        push_and_flatten(buffer, frame(0.5))
        self.assertEqual(len(push_and_flatten(buffer, frame(1.0))), 107)


class ObservationFrameTests(SimpleTestCase):
    def test_gravity_of_level_base(self):
        state = RobotState.standing(yaw=0.7)
        observation = ObservationFrame.from_state(state, (0.5, 0.0, 0.0), np.zeros(77))
        np.testing.assert_allclose(observation.projected_gravity, [0.0, 0.0, -1.0], atol=1e-12)
        self.assertEqual(len(observation.vector()), 107)

    def test_pitched_base(self):
        state = RobotState.standing()
        pitched = RobotState(**{**state.__dict__, 'orientation': Rotation.from_euler('y', 0.3).as_quat()})
        gravity = ObservationFrame.from_state(pitched, (0, 0, 0), np.zeros(77)).projected_gravity
        self.assertAlmostEqual(np.linalg.norm(gravity), 1.0, places=12)
        self.assertAlmostEqual(gravity[0], np.sin(0.3), places=12)

    def test_wrong_sizes(self):
        with self.assertRaises(ValueError):
            frame(heights=np.zeros(76))
        with self.assertRaises(ValueError):
            ObservationFrame(command=(0, 0, 0), joint_positions=np.zeros(12), joint_velocities=np.zeros(12),
                             projected_gravity=(0.0, 0.0, -2.0), heights=np.zeros(77))


class AssembleInputsTests(SimpleTestCase):
    def targets(self, vx=0.0):
        return EstimationTargets(linear_velocity=(vx, 0.0, 0.0), friction=1.0, contacts=np.ones(4, dtype=bool))

    def test_dimensions(self):
        inputs = assemble_inputs(np.zeros(1070), self.targets(0.1), self.targets(0.2))
        self.assertEqual(len(inputs.actor), 1078)
        self.assertEqual(len(inputs.critic), 1078)
        np.testing.assert_array_equal(inputs.estimator_target, self.targets(0.2).vector())

    def test_same_targets_same_inputs(self):
        observation = np.random.default_rng(0).normal(size=1070)
        inputs = assemble_inputs(observation, self.targets(0.4), self.targets(0.4))
        np.testing.assert_array_equal(inputs.actor, inputs.critic)

    def test_zeros(self):
        inputs = assemble_inputs(np.zeros(1070), np.zeros(8), np.zeros(8))
        np.testing.assert_array_equal(inputs.actor, np.zeros(1078))

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            assemble_inputs(np.zeros(1069), np.zeros(8), np.zeros(8))
        with self.assertRaises(ValueError):
            assemble_inputs(np.zeros(1070), np.zeros(7), np.zeros(8))

    def test_contacts_must_be_boolean(self):
        with self.assertRaises(ValueError):
            EstimationTargets(linear_velocity=(0, 0, 0), friction=1.0, contacts=np.ones(4))


class ObservationExportTests(SimpleTestCase):
    def test_csv_rows(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = observations_to_csv([0.0, 0.02], [frame(0.0), frame(1.0)], Path(tmp) / 'observations.csv')
            lines = path.read_text().splitlines()
        self.assertEqual(len(lines), 3)
        header = lines[0].split(',')
        self.assertEqual(header[:4], ['t', 'cmd_vx', 'cmd_vy', 'cmd_wz'])
        self.assertEqual(len(header), 108)
        self.assertEqual(lines[2].split(',')[:2], ['0.02', '1'])


class ObservationSerializerTests(SimpleTestCase):
    def test_bias_ablation(self):
        serializer = ObservationSerializer(data={'height_bias': False})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        state = serializer.create(serializer.validated_data)
        self.assertEqual(state.bias_sigma, (0.0, 0.0, 0.0))
        self.assertEqual(state.sample_sigma, 0.01)

    def test_bad_period(self):
        serializer = ObservationSerializer(data={'bias_period': 0})
        self.assertFalse(serializer.is_valid())
        self.assertIn('bias_period', serializer.errors)
