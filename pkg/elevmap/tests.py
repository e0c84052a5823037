import tempfile
import time
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from cloudfilter.models import PointCloud
from elevmap.grid import ElevationMap
from elevmap.models import SensorVarianceModel

ORIGIN = (0.0, 0.0, 1.0)


def cloud_of(points, t=0.0):
    return PointCloud(t=t, frame='odom', points=np.asarray(points, dtype=float).reshape(-1, 3))


def flat_patch(z, n=20, pitch=0.025, x0=0.0125, y0=0.0125):
    xs, ys = np.meshgrid(x0 + np.arange(n) * pitch, y0 + np.arange(n) * pitch, indexing='ij')
    return np.column_stack([xs.ravel(), ys.ravel(), np.full(n * n, z)])


class IntegrateCloudTests(SimpleTestCase):
    def setUp(self):
        self.map = ElevationMap(resolution=0.025, length=2.0)
        self.model = SensorVarianceModel(base_variance=0.01)

    def test_first_then_second_measurement(self):
        self.map.integrate_cloud(cloud_of([0.0125, 0.0125, 0.10]), ORIGIN, self.model, 0.0)
        estimate = self.map.query_height(0.0125, 0.0125)
        self.assertAlmostEqual(estimate.height, 0.10, places=15)
        self.assertAlmostEqual(estimate.variance, 0.01, places=15)

        self.map.integrate_cloud(cloud_of([0.0125, 0.0125, 0.0]), ORIGIN, self.model, 0.0)
        estimate = self.map.query_height(0.0125, 0.0125)
        self.assertAlmostEqual(estimate.height, 0.05, places=12)
        self.assertAlmostEqual(estimate.variance, 0.005, places=15)

    def test_repeated_measurements(self):
        z_star = 0.137
        for n in (1, 2, 10, 100):
            with self.subTest(n=n):
                grid = ElevationMap(resolution=0.025, length=2.0)
                grid.integrate_cloud(cloud_of([[0.3, 0.3, z_star]] * n), ORIGIN, self.model, 0.0)
                estimate = grid.query_height(0.3, 0.3)
                self.assertEqual(estimate.height, z_star)
                self.assertLess(abs(estimate.variance - 0.01 / n) / (0.01 / n), 1e-12)

    def test_repeated_measurements_across_clouds(self):
        for n in (1, 2, 10, 100):
            with self.subTest(n=n):
                grid = ElevationMap(resolution=0.025, length=2.0)
                for _ in range(n):
                    grid.integrate_cloud(cloud_of([0.3, 0.3, 0.2]), ORIGIN, self.model, 1.0)
                estimate = grid.query_height(0.3, 0.3)
                self.assertEqual(estimate.height, 0.2)
                self.assertLess(abs(estimate.variance - 0.01 / n) / (0.01 / n), 1e-12)

    def test_variance_never_grows_without_time(self):
        rng = np.random.default_rng(0)
        previous = None
        for _ in range(10):
            self.map.integrate_cloud(cloud_of([0.3, 0.3, rng.normal(scale=0.05)]), ORIGIN, self.model, 0.0)
            variance = self.map.query_height(0.3, 0.3).variance
            if previous is not None:
                self.assertLessEqual(variance, previous)
            previous = variance

    def test_partition_does_not_matter(self):
        rng = np.random.default_rng(1)
        points = np.column_stack([rng.uniform(-0.2, 0.2, (500, 2)), rng.normal(scale=0.02, size=500)])
        whole = ElevationMap(resolution=0.025, length=2.0)
        whole.integrate_cloud(cloud_of(points), ORIGIN, self.model, 0.0)
        parts = ElevationMap(resolution=0.025, length=2.0)
        parts.integrate_cloud(cloud_of(points[:200]), ORIGIN, self.model, 0.0)
        parts.integrate_cloud(cloud_of(points[200:]), ORIGIN, self.model, 0.0)
        np.testing.assert_array_equal(parts.valid, whole.valid)
        np.testing.assert_allclose(parts.height[whole.valid], whole.height[whole.valid], atol=1e-12)
        np.testing.assert_allclose(parts.variance[whole.valid], whole.variance[whole.valid], rtol=1e-12)

    def test_time_inflates_prior_variance(self):
        model = SensorVarianceModel(base_variance=0.01, time_rate=0.005)
        self.map.integrate_cloud(cloud_of([0.3, 0.3, 0.0]), ORIGIN, model, 0.0)
        self.map.integrate_cloud(cloud_of([0.3, 0.3, 0.3]), ORIGIN, model, 2.0)
        estimate = self.map.query_height(0.3, 0.3)
        # prior 0.02 against measurement 0.01
        self.assertAlmostEqual(estimate.variance, 0.02 * 0.01 / 0.03, places=12)
        self.assertAlmostEqual(estimate.height, 0.2, places=12)

    def test_range_term(self):
        model = SensorVarianceModel(base_variance=0.01, range_coefficient=0.01)
        self.map.integrate_cloud(cloud_of([0.3, 0.3, 0.0]), (0.3, 0.3, 1.0), model, 0.0)
        self.assertAlmostEqual(self.map.query_height(0.3, 0.3).variance, 0.02, places=12)

    def test_points_outside_are_counted(self):
        result = self.map.integrate_cloud(cloud_of([[0.3, 0.3, 0.0], [5.0, 0.0, 0.0], [0.0, -1.5, 0.0]]),
                                          ORIGIN, self.model, 0.0)
        self.assertEqual(result.points_skipped, 2)
        self.assertEqual(result.cells_updated, 1)
        self.assertEqual(self.map.skipped_points, 2)

    def test_older_cloud_rejected(self):
        self.map.integrate_cloud(cloud_of([0.3, 0.3, 0.0]), ORIGIN, self.model, 1.0)
        with self.assertRaises(ValueError):
            self.map.integrate_cloud(cloud_of([0.3, 0.3, 0.0]), ORIGIN, self.model, 0.5)

    def test_length_is_bounded(self):
        with self.assertRaises(ValueError):
            ElevationMap(resolution=0.025, length=6.0)
        self.assertEqual(ElevationMap().size, 200)

    @tag('slow')
    def test_integration_budget(self):
        rng = np.random.default_rng(2)
        points = np.column_stack([rng.uniform(-2.4, 2.4, (10_000, 2)), rng.normal(scale=0.05, size=10_000)])
        cloud = cloud_of(points)
        grid = ElevationMap()
        model = SensorVarianceModel.front_stereo()
        durations = []
        for i in range(21):
            start = time.perf_counter()
            grid.integrate_cloud(cloud, ORIGIN, model, float(i))
            durations.append(time.perf_counter() - start)
        self.assertLess(np.median(durations), 0.005)


class DriftCompensationTests(SimpleTestCase):
    def setUp(self):
        self.map = ElevationMap(resolution=0.025, length=2.0)
        self.model = SensorVarianceModel(base_variance=0.01)
        self.map.integrate_cloud(cloud_of(flat_patch(0.0)), ORIGIN, self.model, 0.0)

    def test_constant_offset(self):
        shift = self.map.drift_compensate(cloud_of(flat_patch(0.05)))
        self.assertAlmostEqual(shift, 0.05, places=12)
        self.assertAlmostEqual(self.map.query_height(0.1, 0.1).height, 0.05, places=12)
        self.assertAlmostEqual(self.map.z_shift, 0.05, places=12)

    def test_matching_cloud_gives_zero(self):
        self.assertEqual(self.map.drift_compensate(cloud_of(flat_patch(0.0))), 0.0)

    def test_gated_points_are_ignored(self):
        points = flat_patch(0.05, n=10)
        points[80:, 2] = 0.50
        self.assertAlmostEqual(self.map.drift_compensate(cloud_of(points)), 0.05, delta=1e-9)

    def test_too_few_points(self):
        self.assertEqual(self.map.drift_compensate(cloud_of(flat_patch(0.05, n=4))), 0.0)
        self.assertEqual(self.map.query_height(0.0125, 0.0125).height, 0.0)

    def test_unseen_cells_do_not_count(self):
        self.assertEqual(self.map.drift_compensate(cloud_of(flat_patch(0.05, x0=-0.9875))), 0.0)

    def step_map(self):
        """A 10 cm step at x=0.5 over 40 x 20 measured cells."""
        grid = ElevationMap(resolution=0.025, length=2.0)
        points = flat_patch(0.0, n=40)
        points = points[points[:, 1] < 0.5]
        points[points[:, 0] >= 0.5, 2] = 0.10
        grid.integrate_cloud(cloud_of(points), ORIGIN, self.model, 0.0)
        return grid, points

    def test_roughness(self):
        grid, _ = self.step_map()
        roughness = grid.roughness()
        # x=0.4875 and x=0.5125 border the step
        np.testing.assert_allclose(roughness[59, 40:60], 0.10, atol=1e-12)
        np.testing.assert_allclose(roughness[60, 40:60], 0.10, atol=1e-12)
        np.testing.assert_array_equal(roughness[50, 40:60], 0.0)
        np.testing.assert_array_equal(roughness[70, 40:60], 0.0)
        self.assertEqual(roughness[0, 0], np.inf)

    def test_step_faces_do_not_bias_the_shift(self):
        grid, points = self.step_map()
        lifted = points + [0.0, 0.0, 0.01]
        ys = 0.0125 + np.arange(20) * 0.025
        face = np.array([[0.49, y, z] for y in ys for z in (0.03, 0.05, 0.07, 0.09)])
        shift = grid.drift_compensate(cloud_of(np.vstack([lifted, face])))
        self.assertAlmostEqual(shift, 0.01, places=12)
        self.assertAlmostEqual(grid.query_height(0.8, 0.2).height, 0.11, places=12)

    def test_integrating_after_compensation(self):
        cloud = cloud_of(flat_patch(0.05))
        self.map.drift_compensate(cloud)
        self.map.integrate_cloud(cloud, ORIGIN, self.model, 0.1)
        heights = self.map.valid_points()[:, 2]
        self.assertTrue(np.all(np.abs(heights - 0.05) <= 0.1))


class RecenterTests(SimpleTestCase):
    def random_map(self, seed=0):
        rng = np.random.default_rng(seed)
        grid = ElevationMap(resolution=0.025, length=1.0)
        points = np.column_stack([rng.uniform(-0.5, 0.5, (2000, 2)), rng.normal(scale=0.1, size=2000)])
        grid.integrate_cloud(cloud_of(points), ORIGIN, SensorVarianceModel(base_variance=0.01), 0.0)
        return grid

    def test_sub_cell_motion_keeps_grid(self):
        grid = self.random_map()
        before = grid.height.copy()
        self.assertEqual(grid.recenter((0.024, -0.02)), (0, 0))
        np.testing.assert_array_equal(grid.height, before)
        np.testing.assert_array_equal(grid.center, (0.0, 0.0))

    def test_whole_cell_shift(self):
        grid = self.random_map()
        height, variance, valid = grid.height.copy(), grid.variance.copy(), grid.valid.copy()
        self.assertEqual(grid.recenter((3 * 0.025, 0.0)), (3, 0))
        np.testing.assert_array_equal(grid.height[:-3][valid[3:]], height[3:][valid[3:]])
        np.testing.assert_array_equal(grid.variance[:-3][valid[3:]], variance[3:][valid[3:]])
        self.assertFalse(grid.valid[-3:].any())
        self.assertAlmostEqual(grid.center[0], 0.075)

    def test_world_lookup_survives_scroll(self):
        grid = self.random_map()
        before = grid.query_height(0.2125, 0.1125)
        grid.recenter((0.1, -0.05))
        self.assertEqual(grid.query_height(0.2125, 0.1125), before)

    def test_round_trip(self):
        grid = self.random_map(seed=3)
        height, valid = grid.height.copy(), grid.valid.copy()
        grid.recenter((0.1, 0.05))
        grid.recenter((0.0, 0.0))
        overlap = grid.valid
        self.assertTrue(np.all(valid[overlap]))
        np.testing.assert_array_equal(grid.height[overlap], height[overlap])
        np.testing.assert_array_equal(overlap[4:-4, 2:-2], valid[4:-4, 2:-2])

    def test_scroll_past_window_clears_map(self):
        grid = self.random_map()
        grid.recenter((3.0, 0.0))
        self.assertFalse(grid.valid.any())


class QueryAndSnapshotTests(SimpleTestCase):
    def test_never_measured_is_missing(self):
        grid = ElevationMap(length=1.0)
        self.assertIsNone(grid.query_height(0.1, 0.1))
        self.assertIsNone(grid.query_height(3.0, 0.0))

    def test_vectorized_query(self):
        grid = ElevationMap(length=1.0)
        grid.integrate_cloud(cloud_of([0.1, 0.1, 0.2]), ORIGIN, SensorVarianceModel(base_variance=0.01), 0.0)
        heights, available = grid.query_heights([0.1, 0.3, 2.0], [0.1, 0.1, 0.0])
        np.testing.assert_array_equal(available, [True, False, False])
        self.assertEqual(heights[0], 0.2)

    def test_csv_snapshot(self):
        grid = ElevationMap(resolution=0.05, length=1.0, center=(1.0, 0.0))
        grid.integrate_cloud(cloud_of(flat_patch(0.1, n=5, pitch=0.05, x0=0.525, y0=-0.475)), ORIGIN,
                             SensorVarianceModel(base_variance=1e-4), 0.0)
        grid.drift_compensate(cloud_of(flat_patch(0.11, n=5, pitch=0.05, x0=0.525, y0=-0.475)), min_points=5)
        with tempfile.TemporaryDirectory() as tmp:
            path = grid.to_csv(Path(tmp) / 'map_0.csv')
            self.assertTrue(path.read_text().startswith('# center_x=1.0,center_y=0.0,resolution=0.05,z_shift='))
            loaded = ElevationMap.from_csv(path)
        np.testing.assert_array_equal(loaded.valid, grid.valid)
        np.testing.assert_allclose(loaded.height[grid.valid], grid.height[grid.valid], atol=1e-9)
        self.assertAlmostEqual(loaded.z_shift, 0.01, places=9)
