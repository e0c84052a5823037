import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from reward.episode import RewardEpisode
from reward.models import TERMS, RewardWeights
from reward.serializers import RewardSerializer
from reward.terms import compute_terms, pd_torques, phi, total
from scene.builder import build_scene
from scene.models import FlatRegion, SceneSpec
from sensorsim.models import DEFAULT_JOINT_POSITIONS, RobotState

ZEROS = np.zeros(12)


def flat_ground():
    spec = SceneSpec(primitives=(FlatRegion(z=0.0),), x_min=-1.0, x_max=3.0, y_min=-1.0, y_max=1.0)
    return build_scene(spec, 0.05)


def state_with(**changes):
    return RobotState(**{**RobotState.standing().__dict__, **changes})


class PhiTests(SimpleTestCase):
    def test_analytic_points(self):
        self.assertEqual(phi(np.zeros(2)), 1.0)
        self.assertAlmostEqual(phi([0.25, 0.0]), math.exp(-1), delta=1e-12)
        self.assertAlmostEqual(phi([0.25, 0.25]), math.exp(-2), delta=1e-12)

    def test_scalar_input(self):
        self.assertAlmostEqual(phi(-0.25), math.exp(-1), delta=1e-12)

    def test_peak_at_zero_error(self):
        errors = np.linspace(-1.0, 1.0, 201)
        values = [phi(e) for e in errors]
        self.assertEqual(errors[int(np.argmax(values))], 0.0)
        self.assertTrue(all(0.0 < v <= 1.0 for v in values))


class ComputeTermsTests(SimpleTestCase):
    def test_perfect_tracking_at_rest(self):
        breakdown = compute_terms(RobotState.standing(), (0.0, 0.0, 0.0), ZEROS, ZEROS, ZEROS, 0)
        self.assertEqual(breakdown.contributions['lin_vel_tracking'] + breakdown.contributions['ang_vel_tracking'],
                         1.5)
        for term in TERMS[2:]:
            self.assertEqual(breakdown.values[term], 0.0, term)
        self.assertEqual(breakdown.total, 1.5)

    def test_tracking_while_walking(self):
        state = state_with(linear_velocity=np.array([0.5, 0.1, 0.0]), angular_velocity=np.array([0.0, 0.0, 0.3]))
        breakdown = compute_terms(state, (0.5, 0.1, 0.3), ZEROS, ZEROS, ZEROS, 0)
        self.assertEqual(breakdown.values['lin_vel_tracking'], 1.0)
        self.assertEqual(breakdown.values['ang_vel_tracking'], 1.0)

    def test_torque_limit_overshoot(self):
        torques = np.zeros(12)
        torques[2] = RewardWeights().torque_limit[2] + 1.0
        breakdown = compute_terms(RobotState.standing(), (0.0, 0.0, 0.0), ZEROS, ZEROS, torques, 0)
        self.assertAlmostEqual(breakdown.values['torque_limits'], 1.0, places=9)
        self.assertAlmostEqual(breakdown.contributions['torque_limits'], -10.0, places=9)

    def test_air_time_credit_on_touchdown(self):
        touchdown = np.array([True, False, False, True])
        on_target = state_with(touchdown=touchdown, last_air_times=np.array([0.25, 0.0, 0.0, 0.25]))
        long_steps = state_with(touchdown=touchdown, last_air_times=np.array([0.35, 0.0, 0.0, 0.35]))
        self.assertEqual(compute_terms(on_target, (0, 0, 0), ZEROS, ZEROS, ZEROS, 0).values['feet_air_time'], 0.0)
        breakdown = compute_terms(long_steps, (0, 0, 0), ZEROS, ZEROS, ZEROS, 0)
        self.assertAlmostEqual(breakdown.contributions['feet_air_time'], 3.0 * 0.2, places=12)

    def test_penalty_magnitudes(self):
        state = state_with(linear_velocity=np.array([0.0, 0.0, 0.5]), angular_velocity=np.array([0.1, 0.2, 0.0]),
                           position=np.array([0.0, 0.0, 0.25]))
        action = np.full(12, 0.1)
        breakdown = compute_terms(state, (0, 0, 0), action, ZEROS, ZEROS, 2)
        self.assertAlmostEqual(breakdown.values['lin_vel_z'], 0.25)
        self.assertAlmostEqual(breakdown.values['ang_vel_xy'], 0.05)
        self.assertAlmostEqual(breakdown.values['action_rate'], 0.12)
        self.assertAlmostEqual(breakdown.values['trunk_height'], 0.0025)
        self.assertEqual(breakdown.contributions['collisions'], -2.0)
        self.assertTrue(all(v >= 0 for v in breakdown.values.values()))

    def test_trunk_height_above_ground(self):
        state = state_with(position=np.array([0.0, 0.0, 0.50]))
        breakdown = compute_terms(state, (0, 0, 0), ZEROS, ZEROS, ZEROS, 0, ground_height=0.2)
        self.assertEqual(breakdown.values['trunk_height'], 0.0)

    def test_penalties_lower_the_total(self):
        previous = None
        for vz in (0.0, 0.5, 1.0, 2.0):
            value = compute_terms(state_with(linear_velocity=np.array([0.0, 0.0, vz])), (0, 0, 0), ZEROS, ZEROS,
                                  ZEROS, 0).total
            if previous is not None:
                self.assertLess(value, previous)
            previous = value

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            compute_terms(RobotState.standing(), (0, 0, 0), np.zeros(11), ZEROS, ZEROS, 0)
        with self.assertRaises(ValueError):
            compute_terms(RobotState.standing(), (0, 0), ZEROS, ZEROS, ZEROS, 0)


class TotalTests(SimpleTestCase):
    def test_scaling_branches(self):
        self.assertEqual(total(1.5), 1.5)
        self.assertAlmostEqual(total(-0.4), -0.1, places=15)
        self.assertEqual(total(0.0), 0.0)

    def test_scaled_once(self):
        breakdown = compute_terms(state_with(linear_velocity=np.array([2.0, 0.0, 1.0])), (0, 0, 0), ZEROS, ZEROS,
                                  ZEROS, 0)
        self.assertLess(breakdown.raw_sum, 0)
        self.assertAlmostEqual(breakdown.total, 0.25 * breakdown.raw_sum, places=15)
        self.assertAlmostEqual(total(breakdown), breakdown.total, places=15)

    def test_weights_validation(self):
        with self.assertRaises(ValueError):
            RewardWeights(tracking_sigma=0.0)
        with self.assertRaises(ValueError):
            RewardWeights(negative_scale=1.5)


class PdTorqueTests(SimpleTestCase):
    def test_default_pose_holds(self):
        np.testing.assert_array_equal(pd_torques(ZEROS, DEFAULT_JOINT_POSITIONS, ZEROS, DEFAULT_JOINT_POSITIONS),
                                      ZEROS)

    def test_gains(self):
        torques = pd_torques(np.ones(12), DEFAULT_JOINT_POSITIONS, np.full(12, 2.0), DEFAULT_JOINT_POSITIONS)
        np.testing.assert_allclose(torques, 20.0 * 0.25 - 0.5 * 2.0)


class RewardEpisodeTests(SimpleTestCase):
    def test_standing_episode(self):
        episode = RewardEpisode(flat_ground())
        for k in range(5):
            breakdown = episode.step(RobotState.standing(t=k * 0.02), (0.0, 0.0, 0.0), ZEROS)
            self.assertEqual(breakdown.total, 1.5)
        self.assertFalse(episode.terminated)
        self.assertEqual(episode.mean_total(), 1.5)

    def test_low_trunk_counts_leg_collisions(self):
        episode = RewardEpisode(flat_ground())
        breakdown = episode.step(RobotState.standing(z=0.15), (0.0, 0.0, 0.0), ZEROS)
        self.assertGreaterEqual(breakdown.values['collisions'], 4)

    def test_trunk_contact_ends_episode(self):
        episode = RewardEpisode(flat_ground())
        with self.assertLogs('reward.episode', level='WARNING'):
            self.assertIsNotNone(episode.step(RobotState.standing(z=0.05), (0.0, 0.0, 0.0), ZEROS))
        self.assertEqual(episode.terminated_at, 0.0)
        self.assertIsNone(episode.step(RobotState.standing(t=0.02), (0.0, 0.0, 0.0), ZEROS))
        self.assertEqual(len(episode.breakdowns), 1)

    def test_ground_held_past_the_terrain_edge(self):
        spec = SceneSpec(primitives=(FlatRegion(z=0.2),), x_min=-1.0, x_max=3.0, y_min=-1.0, y_max=1.0)
        episode = RewardEpisode(build_scene(spec, 0.05))
        on = episode.step(RobotState.standing(z=0.5), (0.0, 0.0, 0.0), ZEROS)
        with self.assertLogs('reward.episode', level='WARNING') as logs:
            off = episode.step(RobotState.standing(x=3.5, z=0.5, t=0.02), (0.0, 0.0, 0.0), ZEROS)
            episode.step(RobotState.standing(x=3.6, z=0.5, t=0.04), (0.0, 0.0, 0.0), ZEROS)
        self.assertEqual(len(logs.output), 1)
        self.assertIn('holding ground height 0.200', logs.output[0])
        self.assertEqual(off.values['trunk_height'], on.values['trunk_height'])
        self.assertFalse(episode.terminated)

    def test_csv_export(self):
        episode = RewardEpisode(flat_ground())
        episode.step(RobotState.standing(), (0.0, 0.0, 0.0), ZEROS)
        with tempfile.TemporaryDirectory() as tmp:
            lines = episode.to_csv(Path(tmp) / 'reward.csv').read_text().splitlines()
        header = lines[0].split(',')
        self.assertEqual(header[:3], ['t', 'lin_vel_tracking', 'ang_vel_tracking'])
        self.assertEqual(header[-2:], ['raw_sum', 'total'])
        self.assertEqual(len(lines), 2)


class RewardSerializerTests(SimpleTestCase):
    def test_weight_override(self):
        serializer = RewardSerializer(data={'weights': {'collisions': -2.0}})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        weights = serializer.create(serializer.validated_data)
        self.assertEqual(weights.collisions, -2.0)
        self.assertEqual(weights.torque_limits, -10.0)

    def test_unknown_term(self):
        serializer = RewardSerializer(data={'weights': {'stumble': -1.0}, 'negative_scale': 2.0})
        self.assertFalse(serializer.is_valid())
        self.assertIn('weights', serializer.errors)
