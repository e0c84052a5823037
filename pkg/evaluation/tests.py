import json
import math
import tempfile
import time
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.spatial.transform import Rotation

from cloudfilter.models import PointCloud
from elevmap.grid import ElevationMap
from elevmap.models import SensorVarianceModel
from evaluation.exceptions import MetricError
from evaluation.metrics import chamfer_one_way, map_vs_ground_truth, rte, tracking_rms
from evaluation.models import MetricReport, TrajectorySample
from evaluation.reports import compare_reports, read_reports, write_reports
from odometry.models import OdometryTrack
from scene.builder import build_scene
from scene.models import FlatRegion, Pose, SceneSpec
from sensorsim.commands import constant_profile
from sensorsim.models import CommandProfile, CommandSegment


def brute_force_chamfer(source, target):
    distances = np.linalg.norm(source[:, None, :] - target[None, :, :], axis=2)
    return distances.min(axis=1).mean() * 100.0


def straight_line(length=12.0, step=0.005, yaw=0.0, scale=1.0):
    s = np.arange(0.0, length + step / 2, step)
    direction = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    positions = scale * s[:, None] * direction
    orientation = Rotation.from_euler('z', yaw).as_quat()
    return OdometryTrack(times=s, positions=positions, orientations=np.tile(orientation, (len(s), 1)),
                         velocities=np.zeros((len(s), 3)))


class ChamferTests(SimpleTestCase):
    def test_identical_clouds(self):
        points = np.random.default_rng(0).uniform(size=(200, 3))
        self.assertEqual(chamfer_one_way(points, points).cm, 0.0)

    def test_single_pair(self):
        self.assertAlmostEqual(chamfer_one_way([[0, 0, 0]], [[0, 0, 0.01]]).cm, 1.0, places=12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        started = time.perf_counter()
        for _ in range(50):
            source = rng.uniform(-1, 1, (int(rng.integers(1, 1000)), 3))
            target = rng.uniform(-1, 1, (int(rng.integers(1, 1000)), 3))
            expected = brute_force_chamfer(source, target)
            self.assertLessEqual(abs(chamfer_one_way(source, target).cm - expected), 1e-9 * expected)
        self.assertLess(time.perf_counter() - started, 5.0)

    def test_one_way_only(self):
        source = np.zeros((1, 3))
        target = np.array([[0, 0, 0], [0, 0, 1.0]])
        self.assertEqual(chamfer_one_way(source, target).cm, 0.0)
        self.assertAlmostEqual(chamfer_one_way(target, source).cm, 50.0)

    def test_empty_clouds(self):
        result = chamfer_one_way(PointCloud.empty(0.0, 'world'), [[0, 0, 0]])
        self.assertEqual(result.cm, 0.0)
        self.assertTrue(result.empty_source)
        with self.assertRaises(MetricError):
            chamfer_one_way([[0, 0, 0]], np.zeros((0, 3)))


class MapVsGroundTruthTests(SimpleTestCase):
    def setUp(self):
        spec = SceneSpec(primitives=(FlatRegion(z=0.0),), x_min=-2.0, x_max=2.0, y_min=-2.0, y_max=2.0)
        self.hf = build_scene(spec, 0.0175)
        self.pose = Pose.from_xyz_yaw(0.0, 0.0, 0.3, yaw=0.3)

    def mapped(self, z=0.0):
        grid = ElevationMap(length=2.0)
        ix, iy = np.meshgrid(np.arange(grid.size), np.arange(grid.size), indexing='ij')
        cx, cy = grid.cell_center(ix.ravel(), iy.ravel())
        points = np.column_stack([cx, cy, np.full(cx.size, z)])
        grid.integrate_cloud(PointCloud(t=0.0, frame='odom', points=points), (0.0, 0.0, 1.0),
                             SensorVarianceModel(base_variance=1e-4), 0.0)
        return grid

    def test_flat_map_within_quantization(self):
        self.assertLessEqual(map_vs_ground_truth(self.mapped(), self.hf, self.pose), 0.0175 * 100 / 2)

    def test_height_offset(self):
        self.assertGreaterEqual(map_vs_ground_truth(self.mapped(0.02), self.hf, self.pose), 2.0 - 1e-9)

    def test_empty_region_is_missing(self):
        self.assertIsNone(map_vs_ground_truth(ElevationMap(length=2.0), self.hf, self.pose))

    def test_drifted_odometry_frame(self):
        # map and robot share the same odometry offset, so the map is consistent with the robot
        drifted = Pose.from_xyz_yaw(0.0, 0.0, 0.35, yaw=0.3)
        error = map_vs_ground_truth(self.mapped(0.05), self.hf, self.pose, map_pose=drifted)
        self.assertLessEqual(error, 0.0175 * 100 / 2)


class RteTests(SimpleTestCase):
    def test_identical(self):
        gt = straight_line()
        report = rte(gt, gt)
        self.assertEqual(len(report.values), 12)
        self.assertLess(max(report.values), 1e-12)

    def test_scale_error(self):
        report = rte(straight_line(scale=1.02), straight_line())
        self.assertAlmostEqual(report.mean, 0.02, delta=0.0005)

    def test_five_percent_scale_error(self):
        report = rte(straight_line(scale=1.05), straight_line())
        self.assertGreaterEqual(len(report.values), 10)
        self.assertAlmostEqual(report.mean, 0.05, delta=0.005)

    def test_constant_offset(self):
        gt = straight_line()
        shifted = OdometryTrack(gt.times, gt.positions + [0.3, -0.2, 0.1], gt.orientations, gt.velocities)
        self.assertLess(max(rte(shifted, gt).values), 1e-9)

    def test_yaw_offset_is_aligned_away(self):
        gt = straight_line()
        turned = straight_line(yaw=0.4)
        self.assertLess(max(rte(turned, gt).values), 1e-9)

    def test_rigid_motion_of_both(self):
        est, gt = straight_line(scale=1.03), straight_line()
        motion = Pose.from_xyz_yaw(2.0, -1.0, 0.5, yaw=1.1)

        def moved(track):
            return [TrajectorySample(t, motion.apply(p), (motion.rotation * Rotation.from_quat(q)).as_quat())
                    for t, p, q in zip(track.times, track.positions, track.orientations)]

        np.testing.assert_allclose(rte(moved(est), moved(gt)).values, rte(est, gt).values, atol=1e-9)

    def test_too_short(self):
        with self.assertRaises(MetricError):
            rte(straight_line(length=0.5), straight_line(length=0.5))


class TrackingRmsTests(SimpleTestCase):
    def stream(self, profile, error, dt=0.005):
        times = np.arange(0.0, profile.duration + dt / 2, dt)
        commanded = np.array([profile.command_at(t) for t in times])
        return times, commanded + error(times)

    def test_perfect_tracking(self):
        profile = CommandProfile((CommandSegment(0.5, 0.0, 0.0, 2.0), CommandSegment(0.0, 0.5, 1.0, 2.0)))
        result = tracking_rms(self.stream(profile, lambda t: np.zeros((len(t), 3))), profile)
        self.assertEqual((result.vx, result.vy, result.wz), (0.0, 0.0, 0.0))

    def test_constant_error(self):
        profile = CommandProfile((CommandSegment(0.5, 0.0, 0.0, 2.0),) * 3)
        error = lambda t: np.column_stack([np.full(len(t), 0.1), np.zeros(len(t)), np.zeros(len(t))])
        result = tracking_rms(self.stream(profile, error), profile)
        self.assertAlmostEqual(result.vx, 0.1, places=12)
        self.assertEqual(result.vy, 0.0)

    def test_sinusoidal_error(self):
        profile = CommandProfile((CommandSegment(1.0, 0.0, 0.0, 2.0),))
        error = lambda t: np.column_stack([np.zeros(len(t)), 0.2 * np.sin(2 * np.pi * 10 * t), np.zeros(len(t))])
        result = tracking_rms(self.stream(profile, error, dt=0.001), profile)
        self.assertAlmostEqual(result.vy, 0.2 / math.sqrt(2), delta=0.02 * 0.2 / math.sqrt(2))

    def test_settling_transient_ignored(self):
        profile = CommandProfile((CommandSegment(0.5, 0.0, 0.0, 2.0),))
        error = lambda t: np.column_stack([np.where(t < 0.7 - 1e-9, 5.0, 0.0), np.zeros(len(t)), np.zeros(len(t))])
        self.assertEqual(tracking_rms(self.stream(profile, error), profile).vx, 0.0)

    def test_short_segment_skipped(self):
        profile = CommandProfile((CommandSegment(0.5, 0.0, 0.0, 0.5), CommandSegment(0.5, 0.0, 0.0, 2.0)))
        with self.assertLogs('evaluation.metrics', level='WARNING'):
            result = tracking_rms(self.stream(profile, lambda t: np.zeros((len(t), 3))), profile)
        self.assertEqual(result.skipped_segments, 1)

    def test_stream_must_cover_profile(self):
        profile = constant_profile(0.5, 4.0)
        with self.assertRaises(MetricError):
            tracking_rms((np.arange(0.0, 2.0, 0.01), np.zeros((200, 3))), profile)


class ReportTests(SimpleTestCase):
    def report(self, mean, metric='chamfer', label=''):
        return MetricReport(metric=metric, units='cm', values=[mean - 0.1, mean + 0.1], label=label,
                            tags={'sensors': 'front+rear', 'odometry': 'ekf-novio'})

    def test_mean(self):
        report = MetricReport(metric='chamfer', units='cm')
        report.add(1.0)
        report.add(None)
        report.add(2.0)
        self.assertEqual(report.mean, 1.5)
        self.assertEqual(report.missing, 1)
        self.assertTrue(math.isnan(MetricReport(metric='rte', units='m').mean))

    def test_written_and_read_back(self):
        reports = [self.report(1.416), self.report(0.05, metric='rte', label='ekf-vio')]
        with tempfile.TemporaryDirectory() as tmp:
            csv_path, json_path = write_reports(reports, tmp)
            header = csv_path.read_text().splitlines()[0]
            loaded = read_reports(Path(tmp))
            payload = json.loads(json_path.read_text())
        self.assertEqual(header, 'metric,label,sensors,odometry,mean,units,windows,missing')
        self.assertEqual([r.key for r in loaded], ['chamfer', 'rte[ekf-vio]'])
        self.assertAlmostEqual(loaded[0].mean, 1.416)
        self.assertAlmostEqual(payload[0]['mean'], 1.416)

    def test_identical_runs(self):
        table = compare_reports([('a', [self.report(1.2)]), ('b', [self.report(1.2)])])
        self.assertEqual(table.loc['chamfer', 'delta_b_%'], 0.0)

    def test_percent_delta(self):
        table = compare_reports([('front', [self.report(1.982)]), ('front+rear', [self.report(1.416)])])
        self.assertAlmostEqual(table.loc['chamfer', 'delta_front+rear_%'], -28.56, delta=0.005)

    def test_mismatched_metrics(self):
        table = compare_reports([('a', [self.report(1.0)]), ('b', [self.report(0.05, metric='rte')])])
        self.assertEqual(sorted(table.index), ['chamfer', 'rte'])
        self.assertTrue(math.isnan(table.loc['rte', 'a']))
        self.assertTrue(math.isnan(table.loc['chamfer', 'b']))

    def test_needs_two_runs(self):
        with self.assertRaises(MetricError):
            compare_reports([('a', [self.report(1.0)])])
