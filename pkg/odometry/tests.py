import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.spatial.transform import Rotation

from odometry.ekf import ekf_predict, ekf_update_pose, ekf_update_velocity, initial_state, run_ekf, vio_track
from odometry.exceptions import CovarianceError
from odometry.fusion import estimate_odometry
from odometry.models import (EkfParams, EkfState, EstimatorNoise, ImuNoise, ImuSample, OdometryTrack, PoseSample,
                             SourceErrorModel, VelocitySample, VioNoise)
from odometry.serializers import OdometrySerializer
from odometry.sources import make_source_streams, sample_times
from scene.builder import build_scene
from scene.models import FlatRegion, SceneSpec
from sensorsim.commands import constant_profile
from sensorsim.trajectory import simulate_trajectory

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])


def straight_walk(speed=0.5, duration=20.0, x_max=15.0):
    spec = SceneSpec(primitives=(FlatRegion(z=0.0),), x_min=0.0, x_max=x_max, y_min=-1.0, y_max=1.0)
    return simulate_trajectory(constant_profile(speed, duration), build_scene(spec, 0.05), 0.005)


def imu_at(t, orientation=IDENTITY):
    return ImuSample(t, np.asarray(orientation, dtype=float), np.zeros(3))


class SourceStreamTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.gt = straight_walk(duration=4.0)

    def test_sample_rates(self):
        streams = make_source_streams(self.gt, SourceErrorModel(), seed=0)
        self.assertEqual(len(streams.estimator), 201)
        self.assertEqual(len(streams.imu), 801)
        self.assertEqual(len(streams.vio), len(sample_times(0.0, 4.0, 90.0)))

    def test_noiseless_streams_equal_ground_truth(self):
        streams = make_source_streams(self.gt, SourceErrorModel.noiseless(), seed=0)
        track = OdometryTrack.from_trajectory(self.gt)
        for sample in streams.vio:
            np.testing.assert_allclose(sample.position, track.positions_at([sample.t])[0], atol=1e-12)
        # the last state stands still
        for sample in streams.estimator[:-1]:
            np.testing.assert_allclose(sample.velocity, [0.5, 0.0, 0.0], atol=1e-12)
        for sample in streams.imu:
            np.testing.assert_allclose(sample.orientation, IDENTITY, atol=1e-12)

    def test_dropout_window_has_no_vio(self):
        model = SourceErrorModel(vio=VioNoise(random_walk=0.0, sigma=0.0, dropouts=((2.0, 4.0),)))
        streams = make_source_streams(self.gt, model, seed=0)
        times = np.array([s.t for s in streams.vio])
        self.assertFalse(np.any((times >= 2.0) & (times <= 4.0)))
        self.assertGreater(len(times), 150)

    def test_estimator_bias_averages_out(self):
        gt = straight_walk(duration=60.0, x_max=35.0)
        model = SourceErrorModel(estimator=EstimatorNoise(sigma=(0.02, 0.02, 0.02), bias=(0.01, 0.0, 0.0)))
        streams = make_source_streams(gt, model, seed=3)
        errors = np.array([s.velocity for s in streams.estimator]) - [0.5, 0.0, 0.0]
        np.testing.assert_allclose(errors.mean(axis=0), [0.01, 0.0, 0.0], atol=2e-3)

    def test_same_seed_same_streams(self):
        a = make_source_streams(self.gt, SourceErrorModel(), seed=11)
        b = make_source_streams(self.gt, SourceErrorModel(), seed=11)
        np.testing.assert_array_equal(a.vio[-1].position, b.vio[-1].position)
        np.testing.assert_array_equal(a.imu[5].orientation, b.imu[5].orientation)

    def test_dropouts_do_not_reshuffle_noise(self):
        plain = make_source_streams(self.gt, SourceErrorModel(), seed=2)
        gapped = make_source_streams(self.gt, SourceErrorModel(vio=VioNoise(dropouts=((1.0, 2.0),))), seed=2)
        np.testing.assert_array_equal(plain.vio[-1].position, gapped.vio[-1].position)


class PredictTests(SimpleTestCase):
    def setUp(self):
        self.params = EkfParams()

    def test_zero_velocity_keeps_position(self):
        state = initial_state(0.0, (1.0, 2.0, 0.3), IDENTITY)
        for k in range(1, 50):
            state = ekf_predict(state, imu_at(k * 0.005), 0.005, self.params)
        np.testing.assert_array_equal(state.position, [1.0, 2.0, 0.3])

    def test_constant_velocity_integrates_exactly(self):
        state = initial_state(0.0, (0.0, 0.0, 0.0), IDENTITY, velocity=(0.5, 0.0, 0.0))
        for k in range(1, 401):
            state = ekf_predict(state, imu_at(k * 0.005), 0.005, self.params)
        self.assertAlmostEqual(state.position[0], 1.0, delta=1e-9)

    def test_trace_grows(self):
        state = initial_state(0.0, (0.0, 0.0, 0.0), IDENTITY)
        previous = np.trace(state.covariance)
        for k in range(1, 20):
            state = ekf_predict(state, imu_at(k * 0.005), 0.005, self.params)
            self.assertGreater(np.trace(state.covariance), previous)
            previous = np.trace(state.covariance)

    def test_velocity_turns_with_the_body(self):
        state = initial_state(0.0, (0.0, 0.0, 0.0), IDENTITY, velocity=(1.0, 0.0, 0.0))
        turned = Rotation.from_euler('z', np.pi / 2).as_quat()
        state = ekf_predict(state, imu_at(0.005, turned), 0.005, self.params)
        np.testing.assert_allclose(state.velocity, [0.0, 1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(state.orientation, turned)

    def test_indefinite_covariance_is_a_fault(self):
        state = initial_state(0.0, (0.0, 0.0, 0.0), IDENTITY)
        broken = EkfState(t=0.0, position=state.position, velocity=state.velocity, orientation=IDENTITY,
                          covariance=np.diag([-1.0] + [1.0] * 8))
        with self.assertRaises(CovarianceError):
            ekf_predict(broken, imu_at(0.005), 0.005, self.params)

    def test_non_positive_dt_rejected(self):
        with self.assertRaises(ValueError):
            ekf_predict(initial_state(0.0, (0, 0, 0), IDENTITY), imu_at(0.0), 0.0)


class UpdateTests(SimpleTestCase):
    def state(self, velocity_variance=0.04, position_variance=0.01):
        covariance = np.diag([position_variance] * 3 + [velocity_variance] * 3 + [1e-6] * 3)
        return EkfState(t=0.0, position=np.array([1.0, 0.0, 0.3]), velocity=np.array([0.5, 0.0, 0.0]),
                        orientation=IDENTITY, covariance=covariance)

    def test_zero_innovation_shrinks_covariance(self):
        state = self.state()
        updated = ekf_update_velocity(state, VelocitySample(0.0, np.array([0.5, 0.0, 0.0])))
        np.testing.assert_array_equal(updated.velocity, state.velocity)
        self.assertLess(np.trace(updated.covariance), np.trace(state.covariance))

    def test_scalar_kalman_gain(self):
        p, r = 0.04, 0.01
        params = EkfParams(velocity_sigma=(0.1, 0.1, 0.1))
        updated = ekf_update_velocity(self.state(velocity_variance=p), VelocitySample(0.0, np.array([0.7, 0.0, 0.0])),
                                      params)
        gain = p / (p + r)
        self.assertAlmostEqual(updated.velocity[0], 0.5 + gain * 0.2, places=12)
        self.assertAlmostEqual(updated.covariance[3, 3], p * r / (p + r), places=12)

    def test_precise_measurement_wins(self):
        params = EkfParams(velocity_sigma=(1e-6, 1e-6, 1e-6))
        updated = ekf_update_velocity(self.state(velocity_variance=1.0),
                                      VelocitySample(0.0, np.array([0.6, 0.1, 0.0])), params)
        np.testing.assert_allclose(updated.velocity, [0.6, 0.1, 0.0], atol=1e-6)

    def test_body_velocity_is_rotated(self):
        yawed = Rotation.from_euler('z', np.pi / 2).as_quat()
        state = EkfState(t=0.0, position=np.zeros(3), velocity=np.zeros(3), orientation=yawed,
                         covariance=np.eye(9))
        updated = ekf_update_velocity(state, VelocitySample(0.0, np.array([0.5, 0.0, 0.0])),
                                      EkfParams(velocity_sigma=(1e-6, 1e-6, 1e-6)))
        np.testing.assert_allclose(updated.velocity, [0.0, 0.5, 0.0], atol=1e-6)

    def test_zero_innovation_pose(self):
        state = self.state()
        updated = ekf_update_pose(state, PoseSample(0.0, state.position.copy()))
        np.testing.assert_array_equal(updated.position, state.position)

    def test_gated_sample_leaves_state_untouched(self):
        state = self.state(position_variance=1e-4)
        params = EkfParams(position_sigma=(0.01, 0.01, 0.01))
        # Mahalanobis distance of 10 times the gate
        offset = np.sqrt(10 * params.gate * (1e-4 + 1e-4))
        updated = ekf_update_pose(state, PoseSample(0.0, state.position + [offset, 0.0, 0.0]), params)
        self.assertEqual(updated.rejected_pose, 1)
        self.assertEqual(updated.position.tobytes(), state.position.tobytes())
        self.assertEqual(updated.covariance.tobytes(), state.covariance.tobytes())


class FusionTests(SimpleTestCase):
    def test_noiseless_fusion_tracks_ground_truth(self):
        gt = straight_walk()
        truth = OdometryTrack.from_trajectory(gt)
        for mode in ('ekf-vio', 'ekf-novio'):
            track = estimate_odometry(gt, mode, SourceErrorModel.noiseless(), seed=0)
            error = np.linalg.norm(track.positions - truth.positions_at(track.times), axis=1)
            self.assertLess(error.max(), 1e-6, mode)
            self.assertAlmostEqual(track.times[-1], 20.0, delta=1e-9)

    def test_missing_vio_keeps_filter_running(self):
        gt = straight_walk(duration=4.0)
        model = SourceErrorModel(vio=VioNoise(dropouts=((0.0, 4.0),)))
        streams = make_source_streams(gt, model, seed=1)
        self.assertEqual(streams.vio, [])
        first = gt[0]
        with_vio = run_ekf(streams, initial_state(0.0, first.position, first.orientation, first.world_velocity))
        without = run_ekf(streams, initial_state(0.0, first.position, first.orientation, first.world_velocity),
                          use_vio=False)
        np.testing.assert_array_equal(with_vio.positions, without.positions)

    def test_vio_bounds_the_drift(self):
        gt = straight_walk(duration=20.0)
        truth = OdometryTrack.from_trajectory(gt)
        model = SourceErrorModel(estimator=EstimatorNoise(bias=(0.05, 0.02, 0.0)), vio=VioNoise(random_walk=0.005))
        errors = {}
        for mode in ('ekf-vio', 'ekf-novio'):
            track = estimate_odometry(gt, mode, model, seed=4)
            errors[mode] = np.linalg.norm(track.positions[-1] - truth.positions_at([track.times[-1]])[0])
        self.assertLess(errors['ekf-vio'], errors['ekf-novio'])

    def test_vio_only_mode_holds_positions(self):
        gt = straight_walk(duration=2.0)
        streams = make_source_streams(gt, SourceErrorModel.noiseless(), seed=0)
        track = vio_track(streams)
        self.assertEqual(len(track), len(streams.imu))
        truth = OdometryTrack.from_trajectory(gt).positions_at(track.times)
        lag = truth[:, 0] - track.positions[:, 0]
        self.assertGreaterEqual(lag.min(), -1e-9)
        self.assertLessEqual(lag.max(), 0.5 / 90.0 + 1e-9)

    def test_ground_truth_mode_and_z_drift(self):
        gt = straight_walk(duration=2.0)
        track = estimate_odometry(gt, 'gt', z_drift_rate=0.01)
        self.assertAlmostEqual(track.positions[-1, 2] - gt[-1].position[2], 0.02, places=12)
        np.testing.assert_array_equal(track.positions[:, :2], OdometryTrack.from_trajectory(gt).positions[:, :2])

    def test_unknown_mode(self):
        with self.assertRaises(ValueError):
            estimate_odometry(straight_walk(duration=1.0), 'wheel')


class TrackTests(SimpleTestCase):
    def test_csv_export(self):
        track = OdometryTrack.from_trajectory(straight_walk(duration=1.0))
        with tempfile.TemporaryDirectory() as tmp:
            path = track.to_csv(Path(tmp) / 'odometry.csv')
            self.assertEqual(path.read_text().splitlines()[0], 't,x,y,z,qx,qy,qz,qw,vx,vy,vz')
            loaded = OdometryTrack.from_csv(path)
        np.testing.assert_allclose(loaded.positions, track.positions, atol=1e-8)

    def test_pose_lookup_is_clamped(self):
        track = OdometryTrack([0.0, 1.0], [[0, 0, 0], [1, 0, 0]], [IDENTITY, IDENTITY], [[1, 0, 0], [1, 0, 0]])
        np.testing.assert_allclose(track.pose_at(0.5).position, [0.5, 0.0, 0.0])
        np.testing.assert_allclose(track.pose_at(3.0).position, [1.0, 0.0, 0.0])


class OdometrySerializerTests(SimpleTestCase):
    def test_defaults(self):
        serializer = OdometrySerializer(data={})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        model, params = serializer.build(serializer.validated_data, gate=9.0)
        self.assertEqual(model, SourceErrorModel())
        self.assertEqual(params.gate, 9.0)
        self.assertEqual(serializer.validated_data['mode'], 'ekf-vio')

    def test_dropouts_and_mode(self):
        serializer = OdometrySerializer(data={'mode': 'ekf-novio', 'vio': {'dropouts': [[2.0, 4.0]]},
                                              'imu': {'orientation_sigma': 0.0}})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        model, _ = serializer.build(serializer.validated_data, gate=9.0)
        self.assertEqual(model.vio.dropouts, ((2.0, 4.0),))
        self.assertEqual(model.imu, ImuNoise(orientation_sigma=0.0))

    def test_bad_mode_and_dropout(self):
        serializer = OdometrySerializer(data={'mode': 'lidar', 'vio': {'dropouts': [[4.0, 2.0]]}})
        self.assertFalse(serializer.is_valid())
        self.assertIn('mode', serializer.errors)
        self.assertIn('vio', serializer.errors)
