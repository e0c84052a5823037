import math

import numpy as np
from django.test import SimpleTestCase

from cloudfilter.models import PointCloud
from scene.builder import build_scene, step_scene
from scene.models import FlatRegion, SceneSpec
from sensorsim.camera import inject_sensor_noise, render_depth
from sensorsim.commands import constant_profile, sample_episode_profile, tracking_grid_profile
from sensorsim.models import CameraModel, CommandProfile, CommandSegment, DepthNoise, GaitParams, RobotState
from sensorsim.serializers import CameraSerializer, GaitSerializer
from sensorsim.trajectory import simulate_trajectory


def flat_world(x_max=6.0, half_width=1.5, resolution=0.025):
    spec = SceneSpec(primitives=(FlatRegion(z=0.0),), x_min=0.0, x_max=x_max, y_min=-half_width, y_max=half_width)
    return build_scene(spec, resolution)


def down_camera(**overrides):
    values = dict(name='down', mount_rpy=(0.0, math.pi / 2, 0.0))
    values.update(overrides)
    return CameraModel(**values)


class SimulateTrajectoryTests(SimpleTestCase):
    def setUp(self):
        self.hf = flat_world()

    def test_zero_command_keeps_pose(self):
        trajectory = simulate_trajectory(constant_profile(0.0, 1.0), self.hf, 0.005)
        first, last = trajectory[0], trajectory[-1]
        np.testing.assert_allclose(last.position, first.position, atol=1e-12)
        np.testing.assert_allclose(last.orientation, first.orientation, atol=1e-12)
        self.assertTrue(all(s.foot_contacts.all() for s in trajectory))

    def test_straight_line_distance(self):
        trajectory = simulate_trajectory(constant_profile(0.5, 2.0), self.hf, 0.005)
        self.assertAlmostEqual(trajectory[-1].position[0] - trajectory[0].position[0], 1.0, delta=1e-9)
        self.assertAlmostEqual(trajectory[-1].t, 2.0, delta=1e-9)
        self.assertAlmostEqual(trajectory[-1].position[1], 0.0, delta=1e-12)

    def test_turn_in_place(self):
        dt = math.pi / 1000
        trajectory = simulate_trajectory(constant_profile(0.0, math.pi, wz=1.0), self.hf, dt)
        yaw = trajectory[-1].yaw
        self.assertAlmostEqual(abs(yaw), math.pi, delta=1e-9)
        np.testing.assert_allclose(trajectory[-1].position[:2], trajectory[0].position[:2], atol=1e-12)

    def test_samples_every_dt(self):
        trajectory = simulate_trajectory(constant_profile(0.3, 1.0), self.hf, 0.01)
        self.assertEqual(len(trajectory), 101)
        np.testing.assert_allclose(np.diff(trajectory.times), 0.01, atol=1e-12)

    def test_air_time_bookkeeping(self):
        dt = 0.005
        trajectory = simulate_trajectory(constant_profile(0.5, 3.0), self.hf, dt)
        touchdowns = []
        for state in trajectory:
            self.assertTrue(np.all(state.foot_air_times[state.foot_contacts] == 0.0))
            touchdowns.extend(state.last_air_times[state.touchdown])
        self.assertGreater(len(touchdowns), 8)
        # swing lasts half a gait period at 2 Hz
        for air in touchdowns:
            self.assertAlmostEqual(air, 0.25, delta=2 * dt)

    def test_base_rises_onto_step(self):
        hf = build_scene(step_scene(0.10, x_start=1.5, depth=2.0, x_max=4.0), 0.025)
        trajectory = simulate_trajectory(constant_profile(0.5, 3.0), hf, 0.005)
        self.assertAlmostEqual(trajectory[0].position[2], 0.30, delta=1e-9)
        self.assertAlmostEqual(trajectory[-1].position[2], 0.40, delta=1e-3)

    def test_leaving_the_map_truncates(self):
        with self.assertLogs('sensorsim.trajectory', level='WARNING'):
            trajectory = simulate_trajectory(constant_profile(1.0, 10.0), flat_world(x_max=3.0), 0.01)
        self.assertTrue(trajectory.truncated)
        self.assertLess(trajectory[-1].t, 10.0)

    def test_non_positive_dt_rejected(self):
        with self.assertRaises(ValueError):
            simulate_trajectory(constant_profile(0.5, 1.0), self.hf, 0.0)

    def test_same_seed_same_stream(self):
        gait = GaitParams(phase_jitter=1.0)
        a = simulate_trajectory(constant_profile(0.5, 1.0), self.hf, 0.01, gait=gait, seed=4)
        b = simulate_trajectory(constant_profile(0.5, 1.0), self.hf, 0.01, gait=gait, seed=4)
        np.testing.assert_array_equal(a[-1].joint_positions, b[-1].joint_positions)


class CommandProfileTests(SimpleTestCase):
    def test_command_switches_at_boundary(self):
        profile = CommandProfile(segments=(CommandSegment(0.5, 0, 0, 1.0), CommandSegment(-0.5, 0, 0, 1.0)))
        self.assertEqual(profile.command_at(0.99)[0], 0.5)
        self.assertEqual(profile.command_at(1.0)[0], -0.5)
        self.assertEqual(profile.command_at(2.5)[0], 0.0)

    def test_tracking_grid_has_45_segments(self):
        profile = tracking_grid_profile()
        self.assertEqual(len(profile.segments), 45)
        self.assertAlmostEqual(profile.duration, 90.0)

    def test_episode_profile_within_ranges(self):
        profile = sample_episode_profile(np.random.default_rng(1))
        self.assertEqual(len(profile.segments), 2)
        for segment in profile.segments:
            self.assertLessEqual(abs(segment.vx), 1.0)
            self.assertLessEqual(abs(segment.vy), 0.5)


class RenderDepthTests(SimpleTestCase):
    def setUp(self):
        self.hf = flat_world(x_max=2.0, half_width=1.0)

    def test_straight_down_sees_constant_depth(self):
        cloud = render_depth(down_camera(), RobotState.standing(x=1.0, z=0.4), self.hf)
        self.assertEqual(len(cloud), 64 * 40)
        self.assertEqual(cloud.frame, 'down')
        np.testing.assert_allclose(cloud.points[:, 0], 0.4, atol=1e-6)

    def test_step_edge_has_two_levels(self):
        hf = build_scene(step_scene(0.225, x_start=1.0, depth=0.30, x_max=3.0), 0.025)
        camera = down_camera()
        state = RobotState.standing(x=1.15, z=0.8)
        cloud = render_depth(camera, state, hf)
        world = (state.pose * camera.mount_pose).apply(cloud.points)
        low = np.abs(world[:, 2]) < 1e-9
        high = np.abs(world[:, 2] - 0.225) < 1e-9
        self.assertTrue(np.all(low | high))
        self.assertTrue(low.any() and high.any())

    def test_out_of_range_gives_empty_cloud(self):
        cloud = render_depth(down_camera(max_range=3.0), RobotState.standing(x=1.0, z=5.0), self.hf)
        self.assertEqual(len(cloud), 0)

    def test_min_range_drops_close_hits(self):
        cloud = render_depth(down_camera(min_range=0.7), RobotState.standing(x=1.0, z=0.4), self.hf)
        self.assertEqual(len(cloud), 0)

    def test_camera_under_terrain_warns(self):
        hf = build_scene(step_scene(0.5, x_start=0.5, depth=1.0, x_max=2.0, y_min=-1.0, y_max=1.0), 0.025)
        with self.assertLogs('sensorsim.camera', level='WARNING'):
            cloud = render_depth(down_camera(), RobotState.standing(x=1.0, z=0.3), hf)
        self.assertEqual(len(cloud), 0)

    def test_front_camera_sees_ground_ahead(self):
        camera = CameraModel.front_stereo()
        state = RobotState.standing(x=0.5, z=0.30)
        cloud = render_depth(camera, state, self.hf)
        world = (state.pose * camera.mount_pose).apply(cloud.points)
        self.assertGreater(len(cloud), 0)
        self.assertTrue(np.all(world[:, 0] > 0.5))
        np.testing.assert_allclose(world[:, 2], 0.0, atol=1e-9)


class SensorNoiseTests(SimpleTestCase):
    def setUp(self):
        directions = np.tile([1.0, 0.0, 0.0], (100_000, 1))
        self.cloud = PointCloud(t=0.0, frame='down', points=directions * 1.0, directions=directions)

    def test_zero_noise_is_identity(self):
        noisy = inject_sensor_noise(self.cloud, down_camera(), seed=0)
        np.testing.assert_array_equal(noisy.points, self.cloud.points)

    def test_full_dropout_is_empty(self):
        noisy = inject_sensor_noise(self.cloud, down_camera(noise=DepthNoise(dropout=1.0)), seed=0)
        self.assertEqual(len(noisy), 0)

    def test_range_noise_std(self):
        noisy = inject_sensor_noise(self.cloud, down_camera(noise=DepthNoise(sigma0=0.01)), seed=0)
        self.assertAlmostEqual(np.std(noisy.points[:, 0] - 1.0), 0.01, delta=0.0005)
        np.testing.assert_array_equal(noisy.points[:, 1:], 0.0)

    def test_same_seed_same_noise(self):
        camera = down_camera(noise=DepthNoise(sigma0=0.01, dropout=0.1))
        a = inject_sensor_noise(self.cloud, camera, seed=7)
        b = inject_sensor_noise(self.cloud, camera, seed=7)
        np.testing.assert_array_equal(a.points, b.points)


class SensorSerializerTests(SimpleTestCase):
    def test_camera_override_in_degrees(self):
        serializer = CameraSerializer(data={'mount_rpy_deg': [0, 45, 0], 'width': 32})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        camera = serializer.build(serializer.validated_data, CameraModel.front_stereo)
        self.assertAlmostEqual(camera.mount_rpy[1], math.pi / 4)
        self.assertEqual(camera.width, 32)
        self.assertEqual(camera.name, 'front')

    def test_noiseless_camera(self):
        serializer = CameraSerializer(data={'noiseless': True})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        camera = serializer.build(serializer.validated_data, CameraModel.rear_tof)
        self.assertEqual(camera.noise, DepthNoise())

    def test_inverted_ranges_rejected(self):
        serializer = CameraSerializer(data={'min_range': 2.0, 'max_range': 1.0})
        self.assertFalse(serializer.is_valid())
        self.assertIn('max_range', serializer.errors)

    def test_gait_defaults(self):
        serializer = GaitSerializer(data={})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save(), GaitParams())
