import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from cloudfilter.body import (body_filter, count_terrain_collisions, foot_positions, pose_capsules,
                              trunk_collides)
from cloudfilter.filters import TOO_SMALL_FOR_OUTLIERS, apply_filters, remove_outliers, voxel_downsample
from cloudfilter.models import BodyModel, FilterParams, PointCloud
from scene.builder import build_scene
from scene.models import FlatRegion, SceneSpec
from sensorsim.models import RobotState


def cloud_of(points, t=0.0, frame='world'):
    return PointCloud(t=t, frame=frame, points=np.asarray(points, dtype=float))


def grid_cloud(n=10, pitch=0.05):
    xs, ys = np.meshgrid(np.arange(n) * pitch, np.arange(n) * pitch, indexing='ij')
    return np.column_stack([xs.ravel(), ys.ravel(), np.zeros(n * n)])


def brute_force_knn_mean(points, k):
    distances = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    return np.sort(distances, axis=1)[:, 1:k + 1].mean(axis=1)


def brute_force_distance(point, a, b):
    ab = b - a
    t = min(1.0, max(0.0, float(np.dot(point - a, ab) / np.dot(ab, ab))))
    return float(np.linalg.norm(point - (a + t * ab)))


class RemoveOutliersTests(SimpleTestCase):
    def test_displaced_grid_point_is_the_only_removal(self):
        points = grid_cloud()
        points[55, 2] = 1.0
        filtered = remove_outliers(cloud_of(points), k=8, std_ratio=2.0)
        self.assertEqual(len(filtered), 99)
        self.assertFalse(np.any(filtered.points[:, 2] == 1.0))

    def test_matches_exhaustive_knn(self):
        rng = np.random.default_rng(5)
        points = np.vstack([rng.normal(scale=0.2, size=(200, 3)), rng.uniform(2.0, 3.0, size=(5, 3))])
        mean_distance = brute_force_knn_mean(points, 8)
        expected = mean_distance <= mean_distance.mean() + 2.0 * mean_distance.std()
        filtered = remove_outliers(cloud_of(points), k=8, std_ratio=2.0)
        np.testing.assert_array_equal(filtered.points, points[expected])

    def test_identical_points_are_kept(self):
        filtered = remove_outliers(cloud_of(np.ones((20, 3))))
        self.assertEqual(len(filtered), 20)

    def test_small_cloud_returned_flagged(self):
        cloud = cloud_of(np.random.default_rng(0).normal(size=(5, 3)))
        filtered = remove_outliers(cloud, k=8)
        np.testing.assert_array_equal(filtered.points, cloud.points)
        self.assertIn(TOO_SMALL_FOR_OUTLIERS, filtered.flags)

    def test_empty_cloud(self):
        self.assertEqual(len(remove_outliers(PointCloud.empty(0.0, 'world'))), 0)

    def test_k_must_be_positive(self):
        with self.assertRaises(ValueError):
            remove_outliers(cloud_of(grid_cloud()), k=0)


class VoxelDownsampleTests(SimpleTestCase):
    def test_single_voxel_collapses_to_centroid(self):
        points = np.random.default_rng(1).uniform(0.051, 0.074, size=(100, 3))
        out = voxel_downsample(cloud_of(points), 0.025)
        self.assertEqual(len(out), 1)
        np.testing.assert_allclose(out.points[0], points.mean(axis=0), atol=1e-12)

    def test_adjacent_voxels_stay_apart(self):
        out = voxel_downsample(cloud_of([[0.01, 0.01, 0.01], [0.035, 0.01, 0.01]]), 0.025)
        self.assertEqual(len(out), 2)

    def test_count_matches_voxel_hash(self):
        points = np.random.default_rng(2).uniform(-0.5, 0.5, size=(3000, 3))
        occupied = {tuple(key) for key in np.floor(points / 0.025).astype(int)}
        out = voxel_downsample(cloud_of(points), 0.025)
        self.assertEqual(len(out), len(occupied))
        self.assertTrue({tuple(key) for key in np.floor(out.points / 0.025).astype(int)} <= occupied)

    def test_idempotent(self):
        points = np.random.default_rng(3).uniform(-0.5, 0.5, size=(2000, 3))
        once = voxel_downsample(cloud_of(points), 0.025)
        twice = voxel_downsample(once, 0.025)
        self.assertEqual(len(twice), len(once))
        np.testing.assert_allclose(np.sort(twice.points, axis=0), np.sort(once.points, axis=0), atol=1e-12)

    def test_resolution_must_be_positive(self):
        with self.assertRaises(ValueError):
            voxel_downsample(cloud_of(grid_cloud()), 0.0)


class BodyFilterTests(SimpleTestCase):
    def setUp(self):
        self.state = RobotState.standing(x=1.0, z=0.30)
        self.body = BodyModel.go1(margin=0.0)

    def test_point_near_calf_is_removed(self):
        calf = next(c for c in pose_capsules(self.state, self.body) if c.link == 'FR_calf')
        middle = 0.5 * (calf.a + calf.b)
        axis = (calf.b - calf.a) / np.linalg.norm(calf.b - calf.a)
        normal = np.cross(axis, [0.0, 0.0, 1.0])
        normal /= np.linalg.norm(normal)
        near = middle + 0.01 * normal
        far = np.array([1.0, 0.0, -1.0])
        filtered = body_filter(cloud_of([near, far]), self.state, self.body)
        np.testing.assert_array_equal(filtered.points, [far])

    def test_distant_cloud_unchanged(self):
        points = np.random.default_rng(4).uniform(-0.5, 0.5, size=(500, 3)) + [1.0, 0.0, -1.5]
        filtered = body_filter(cloud_of(points), self.state, BodyModel.go1())
        self.assertEqual(len(filtered), 500)

    def test_matches_brute_force_capsule_test(self):
        body = BodyModel.go1(margin=0.02)
        points = np.random.default_rng(6).uniform([0.5, -0.4, -0.1], [1.5, 0.4, 0.5], size=(2000, 3))
        capsules = pose_capsules(self.state, body)
        expected = np.array([
            not any(brute_force_distance(p, c.a, c.b) <= c.radius + body.margin for c in capsules) for p in points
        ])
        filtered = body_filter(cloud_of(points), self.state, body)
        np.testing.assert_array_equal(filtered.points, points[expected])
        self.assertLess(len(filtered), len(points))

    def test_removals_grow_with_margin(self):
        points = cloud_of(np.random.default_rng(7).uniform([0.5, -0.4, -0.1], [1.5, 0.4, 0.5], size=(2000, 3)))
        kept = [len(body_filter(points, self.state, BodyModel.go1(margin=m))) for m in (0.0, 0.02, 0.05)]
        self.assertEqual(kept, sorted(kept, reverse=True))

    def test_stale_joints_warn(self):
        with self.assertLogs('cloudfilter.body', level='WARNING'):
            body_filter(cloud_of([[0.0, 0.0, 0.0]], t=1.0), self.state, self.body)

    def test_idempotent(self):
        points = cloud_of(np.random.default_rng(8).uniform([0.5, -0.4, -0.1], [1.5, 0.4, 0.5], size=(1000, 3)))
        once = body_filter(points, self.state, self.body)
        np.testing.assert_array_equal(body_filter(once, self.state, self.body).points, once.points)


class KinematicsTests(SimpleTestCase):
    def test_standing_feet_reach_the_ground(self):
        feet = foot_positions(RobotState.standing(x=1.0, z=0.30))
        np.testing.assert_allclose(feet[:, 2], 0.0, atol=0.015)
        self.assertTrue(np.all(feet[:2, 0] > 1.0) and np.all(feet[2:, 0] < 1.0))
        self.assertTrue(feet[0, 1] < 0 < feet[1, 1])

    def test_terrain_collisions(self):
        hf = build_scene(SceneSpec(primitives=(FlatRegion(z=0.0),), x_min=0, x_max=2, y_min=-1, y_max=1), 0.025)
        body = BodyModel.go1()
        self.assertEqual(count_terrain_collisions(RobotState.standing(x=1.0, z=0.30), body, hf), 0)
        self.assertGreaterEqual(count_terrain_collisions(RobotState.standing(x=1.0, z=0.15), body, hf), 4)
        self.assertFalse(trunk_collides(RobotState.standing(x=1.0, z=0.30), body, hf))
        self.assertTrue(trunk_collides(RobotState.standing(x=1.0, z=0.05), body, hf))


class PipelineTests(SimpleTestCase):
    def test_configured_order(self):
        points = np.random.default_rng(9).uniform(-0.2, 0.2, size=(500, 3)) + [3.0, 0.0, 0.0]
        state = RobotState.standing(x=0.0, z=0.30)
        voxel_only = apply_filters(cloud_of(points), state, BodyModel.go1(), FilterParams(order=('voxel',)))
        self.assertEqual(len(voxel_only), len(voxel_downsample(cloud_of(points), 0.025)))

    def test_unknown_stage_rejected(self):
        with self.assertRaises(ValueError):
            FilterParams(order=('voxel', 'median'))


class PointCloudTests(SimpleTestCase):
    def test_xyz_file(self):
        cloud = cloud_of([[0.1, 0.2, 0.3], [1.0, -2.0, 0.5]])
        with tempfile.TemporaryDirectory() as tmp:
            cloud.to_xyz(Path(tmp) / 'cloud.xyz')
            self.assertEqual((Path(tmp) / 'cloud.xyz').read_text().splitlines()[0], '0.100000 0.200000 0.300000')
            loaded = PointCloud.from_xyz(Path(tmp) / 'cloud.xyz')
        np.testing.assert_allclose(loaded.points, cloud.points)

    def test_non_finite_points_rejected(self):
        with self.assertRaises(ValueError):
            cloud_of([[0.0, np.nan, 0.0]])

    def test_clipped_count_follows_the_cloud(self):
        cloud = PointCloud(t=0.0, frame='world', points=grid_cloud(n=3), clipped=4)
        self.assertEqual(cloud.select(cloud.points[:, 0] > 0).clipped, 4)
        self.assertEqual(cloud.flagged('partial').clipped, 4)
        merged = PointCloud.concatenate([cloud, cloud_of(grid_cloud(n=2)), cloud], 'world')
        self.assertEqual(merged.clipped, 8)
        self.assertEqual(len(merged), 22)
