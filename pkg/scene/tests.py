import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from scene.builder import (build_scene, ground_truth_patch, height_at, heights_at, obstacle_scene,
                           random_step_scene, step_scene)
from scene.exceptions import OutOfExtentError, SceneError
from scene.exports import read_heightfield_csv, write_heightfield_csv
from scene.models import FlatRegion, Heightfield, Pose, SceneSpec, Step
from scene.serializers import SceneSpecSerializer


class BuildSceneTests(SimpleTestCase):
    def test_flat_world_is_all_zero(self):
        hf = build_scene(SceneSpec(primitives=(FlatRegion(z=0.0),), x_min=0, x_max=2, y_min=0, y_max=2), 0.025)
        self.assertEqual(hf.cells.shape, (80, 80))
        self.assertTrue(np.all(hf.cells == 0.0))

    def test_step_occupies_its_depth(self):
        hf = build_scene(step_scene(0.225, x_start=1.0, depth=0.30, x_max=3.0), 0.025)
        cx, _ = hf.cell_center(np.arange(hf.cells_x), 0)
        on_step = (cx >= 1.0) & (cx < 1.3)
        np.testing.assert_array_equal(hf.cells[on_step, 0], 0.225)
        np.testing.assert_array_equal(hf.cells[~on_step, 0], 0.0)
        self.assertEqual(np.count_nonzero(on_step), 12)

    def test_step_matches_analytic_profile_exactly(self):
        spec = step_scene(0.1, x_start=1.2345, depth=0.4)
        hf = build_scene(spec, 0.0175)
        cx, cy = hf.cell_center(*np.meshgrid(np.arange(hf.cells_x), np.arange(hf.cells_y), indexing='ij'))
        analytic = np.where((cx >= 1.2345) & (cx < 1.6345), 0.1, 0.0)
        self.assertEqual(np.max(np.abs(heights_at(hf, cx.ravel(), cy.ravel())[0] - analytic.ravel())), 0.0)

    def test_obstacle_platform_height(self):
        hf = build_scene(obstacle_scene(x_start=2.0), 0.0175)
        self.assertAlmostEqual(height_at(hf, 2.15, 0.0), 0.10)
        self.assertAlmostEqual(height_at(hf, 2.45, 0.0), 0.20)
        self.assertAlmostEqual(height_at(hf, 2.9, 0.0), 0.30)
        # ramp runs down after the 0.6 m platform
        self.assertLess(height_at(hf, 3.4, 0.0), 0.30)
        self.assertEqual(height_at(hf, 5.0, 0.0), 0.0)

    def test_build_is_deterministic(self):
        spec = obstacle_scene()
        a, b = build_scene(spec, 0.02), build_scene(spec, 0.02)
        self.assertEqual(a.cells.tobytes(), b.cells.tobytes())

    def test_overlapping_primitives_rejected(self):
        spec = SceneSpec(primitives=(Step(1.0, 0.1, 0.5), Step(1.3, 0.2, 0.5)))
        with self.assertRaisesMessage(SceneError, 'overlaps'):
            build_scene(spec, 0.025)

    def test_non_positive_dimensions_rejected(self):
        with self.assertRaises(SceneError):
            build_scene(SceneSpec(primitives=(Step(1.0, 0.0, 0.3),)), 0.025)

    def test_heightfield_invariants(self):
        with self.assertRaises(SceneError):
            Heightfield(resolution=0.0, origin=(0, 0), cells=np.zeros((2, 2)))
        with self.assertRaises(SceneError):
            Heightfield(resolution=0.1, origin=(0, 0), cells=np.array([[np.nan]]))

    def test_random_step_scene_respects_bounds(self):
        spec = random_step_scene(np.random.default_rng(3), count=5, max_height=0.30)
        heights = [p.height for p in spec.primitives if isinstance(p, Step)]
        self.assertEqual(len(heights), 5)
        self.assertTrue(all(0.05 <= h <= 0.30 for h in heights))
        spec.validate()


class HeightAtTests(SimpleTestCase):
    def setUp(self):
        self.hf = build_scene(step_scene(0.225, x_start=1.0, x_max=3.0), 0.025)

    def test_cell_sharp_edge(self):
        self.assertEqual(height_at(self.hf, 0.999, 0.0), 0.0)
        self.assertEqual(height_at(self.hf, 1.001, 0.0), 0.225)

    def test_out_of_extent_raises(self):
        with self.assertRaises(OutOfExtentError):
            height_at(self.hf, -0.01, 0.0)
        with self.assertRaises(OutOfExtentError):
            height_at(self.hf, 1.0, 1.6)

    def test_agrees_with_direct_indexing(self):
        rng = np.random.default_rng(0)
        hf = Heightfield(resolution=0.05, origin=(-1.0, 2.0), cells=rng.normal(size=(40, 30)))
        xs = rng.uniform(-1.0, 1.0, 1000)
        ys = rng.uniform(2.0, 3.5, 1000)
        for x, y in zip(xs, ys):
            expected = hf.cells[int(np.floor((x + 1.0) / 0.05)), int(np.floor((y - 2.0) / 0.05))]
            self.assertEqual(height_at(hf, x, y), expected)


class GroundTruthPatchTests(SimpleTestCase):
    def setUp(self):
        self.hf = build_scene(SceneSpec(primitives=(FlatRegion(z=0.0),), x_min=0, x_max=4, y_min=-2, y_max=2), 0.0175)

    def test_flat_patch_is_level(self):
        patch = ground_truth_patch(self.hf, Pose.from_xyz_yaw(2.0, 0.0, 0.3))
        self.assertTrue(np.all(patch.points[:, 2] == 0.0))
        self.assertEqual(patch.frame, 'world')

    def test_patch_count(self):
        patch = ground_truth_patch(self.hf, Pose.from_xyz_yaw(2.0, 0.0, 0.3))
        rows, cols = math.ceil(0.5 / 0.0175), math.ceil(0.3 / 0.0175)
        self.assertLessEqual(abs(len(patch) - rows * cols), rows + cols + 1)

    def test_count_invariant_under_translation(self):
        counts = {len(ground_truth_patch(self.hf, Pose.from_xyz_yaw(x, y))) for x, y in [(2.0, 0.0), (2.0 + 10 * 0.0175, 5 * 0.0175)]}
        self.assertEqual(len(counts), 1)

    def test_yawed_patch_is_long_along_y(self):
        patch = ground_truth_patch(self.hf, Pose.from_xyz_yaw(2.0, 0.0, yaw=math.pi / 2))
        spread = np.ptp(patch.points[:, :2], axis=0)
        self.assertGreater(spread[1], spread[0])
        self.assertAlmostEqual(spread[1], 0.5, delta=0.0175 * 2)

    def test_clipped_patch_logs_count(self):
        with self.assertLogs('scene.builder', level='WARNING') as logs:
            patch = ground_truth_patch(self.hf, Pose.from_xyz_yaw(0.05, 0.0))
        self.assertIn('clipped', logs.output[0])
        self.assertGreater(len(patch), 0)
        self.assertGreater(patch.clipped, 0)
        self.assertIn(f'clipped {patch.clipped} points', logs.output[0])
        self.assertEqual(ground_truth_patch(self.hf, Pose.from_xyz_yaw(2.0, 0.0)).clipped, 0)


class ExportTests(SimpleTestCase):
    def test_csv_roundtrip_keeps_header(self):
        hf = build_scene(step_scene(0.1, x_start=0.5, x_max=1.0, y_min=-0.2, y_max=0.2), 0.05)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_heightfield_csv(hf, Path(tmp) / 'scene.csv')
            self.assertTrue(path.read_text().startswith('# resolution=0.05,'))
            loaded = read_heightfield_csv(path)
        self.assertEqual(loaded.origin, hf.origin)
        np.testing.assert_allclose(loaded.cells, hf.cells, atol=1e-6)


class SceneSpecSerializerTests(SimpleTestCase):
    def test_custom_scene(self):
        serializer = SceneSpecSerializer(data={
            'primitives': [{'kind': 'flat', 'z': 0.0}, {'kind': 'step', 'x_start': 1.0, 'height': 0.2, 'depth': 0.3}],
        })
        self.assertTrue(serializer.is_valid(), serializer.errors)
        spec = serializer.save()
        self.assertEqual(spec.primitives[1], Step(1.0, 0.2, 0.3))

    def test_missing_kind_field_is_reported(self):
        serializer = SceneSpecSerializer(data={'primitives': [{'kind': 'step', 'x_start': 1.0}]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('height', serializer.errors['primitives'][0])

    def test_overlap_is_a_validation_error(self):
        serializer = SceneSpecSerializer(data={'primitives': [
            {'kind': 'step', 'x_start': 1.0, 'height': 0.2, 'depth': 0.5},
            {'kind': 'step', 'x_start': 1.2, 'height': 0.2, 'depth': 0.5},
        ]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('overlaps', str(serializer.errors['primitives']))
