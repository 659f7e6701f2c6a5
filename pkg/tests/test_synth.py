import hashlib
import json

import numpy as np
import pytest

from trirecon.geom import CameraModel, RigidScaleTransform, Shape, look_at, occupancy, sample_surface, shape_bounds
from trirecon.metrics.boxes import OrientedBox
from trirecon.synth import (
    CATEGORIES,
    SynthConfig,
    candidate_cameras,
    extract_partial,
    gen_shape,
    generate_dataset,
    load_bundle,
    load_image,
    make_bundles,
    make_posed_image,
    place_scene,
    projected_box_area,
    read_manifest,
    render_depth,
    select_views,
)
from trirecon.synth.scene import ObjectInstance, SceneSpec


class TestGenShape:
    def test_deterministic(self):
        a = gen_shape("table", 7)
        b = gen_shape("table", 7)
        assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)

    def test_chair_at_least_three_primitives(self):
        for seed in range(5):
            assert len(gen_shape("chair", seed).primitives) >= 3

    def test_seed_diversity(self):
        # 100 seeds per category -> 100 distinct parameter vectors
        for cat in CATEGORIES:
            digests = {
                hashlib.sha256(json.dumps(gen_shape(cat, s).to_dict(), sort_keys=True).encode()).hexdigest()
                for s in range(100)
            }
            assert len(digests) == 100

    def test_canonicalized_bounds(self):
        for cat in CATEGORIES:
            lo, hi = shape_bounds(gen_shape(cat, 11))
            assert np.allclose((lo + hi) / 2, 0, atol=1e-9)
            assert np.isclose((hi - lo).max(), 1.0, atol=1e-9)
            assert (hi - lo).min() > 0.05

    def test_unknown_category(self):
        with pytest.raises(ValueError):
            gen_shape("boat", 0)


class TestPlaceScene:
    def test_single_instance(self):
        scene = place_scene(1, 0)
        assert len(scene.instances) == 1
        box = scene.instances[0].world_box()
        assert box.center[2] > 0  # resting on the floor

    def test_pairwise_iou_zero(self):
        from trirecon.metrics import oriented_iou

        scene = place_scene(8, 3)
        boxes = [inst.world_box() for inst in scene.instances]
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                assert oriented_iou(boxes[i], boxes[j]) == 0.0

    def test_deterministic(self):
        a = place_scene(4, 9)
        b = place_scene(4, 9)
        for ia, ib in zip(a.instances, b.instances):
            assert np.allclose(ia.pose.to_matrix(), ib.pose.to_matrix())
            assert ia.category == ib.category

    def test_rejects_zero_objects(self):
        with pytest.raises(ValueError):
            place_scene(0, 0)

    def test_objects_rest_on_floor(self):
        scene = place_scene(5, 12)
        for inst in scene.instances:
            lo, _ = shape_bounds(inst.world_shape())
            assert abs(lo[2]) < 1e-9


def frontal_cube_scene():
    cube = Shape((__import__("trirecon").geom.Primitive("box", (0.5, 0.5, 0.5)),))
    pose = RigidScaleTransform(np.eye(3), (0.0, 0.0, 0.5), 1.0)
    inst = ObjectInstance(cube, pose, "cabinet")
    return SceneSpec((inst,), 4.0, 0)


def frontal_camera(width=33, height=33, fx=40.0):
    # +x forward toward the cube front face at x = -0.5, centered at z = 0.5
    return look_at((-2.0, 0.0, 0.5), (0.0, 0.0, 0.5), fx, fx, (width - 1) / 2, (height - 1) / 2, width, height)


class TestRenderDepth:
    def test_center_pixel_depth(self):
        scene = frontal_cube_scene()
        cam = frontal_camera()
        dm = render_depth(scene, cam)
        assert np.isclose(dm.depth[16, 16], 1.5, atol=1e-9)

    def test_miss_is_sentinel(self):
        scene = frontal_cube_scene()
        cam = frontal_camera(fx=8.0)  # wide fov: corners miss
        dm = render_depth(scene, cam)
        assert np.isinf(dm.depth[0, 0])

    def test_zmin_composition(self):
        # depth of two stacked objects equals the per-pixel min of singles
        near = frontal_cube_scene().instances[0]
        far_pose = RigidScaleTransform(np.eye(3), (2.0, 0.0, 0.75), 1.5)
        far = ObjectInstance(near.shape, far_pose, "cabinet")
        cam = frontal_camera()
        d_near = render_depth(SceneSpec((near,), 4.0, 0), cam).depth
        d_far = render_depth(SceneSpec((far,), 4.0, 0), cam).depth
        d_both = render_depth(SceneSpec((near, far), 4.0, 0), cam).depth
        assert np.array_equal(d_both, np.minimum(d_near, d_far))

    def test_hit_depths_positive(self):
        scene = place_scene(3, 21)
        cam = candidate_cameras(SynthConfig(image_size=32, n_candidate_cams=4), 21)[0]
        dm = render_depth(scene, cam)
        assert (dm.depth[dm.hit_mask] > 0).all()

    def test_normals_unit_on_hits(self):
        scene = place_scene(3, 22)
        cam = candidate_cameras(SynthConfig(image_size=32, n_candidate_cams=4), 22)[1]
        dm = render_depth(scene, cam)
        norms = np.linalg.norm(dm.normals[dm.hit_mask], axis=-1)
        assert np.allclose(norms, 1.0, atol=1e-9)


class TestPosedImage:
    def test_flat_wall_normal(self):
        scene = frontal_cube_scene()
        img = make_posed_image(scene, frontal_camera())
        center = img.channels[16, 16]
        assert np.allclose(center[1:], [0, 0, -1], atol=1e-6)

    def test_no_hit_zeroed(self):
        scene = frontal_cube_scene()
        img = make_posed_image(scene, frontal_camera(fx=8.0))
        assert np.allclose(img.channels[0, 0], 0.0)

    def test_inverse_depth_range(self):
        scene = place_scene(2, 5)
        cam = candidate_cameras(SynthConfig(image_size=32, n_candidate_cams=4), 5)[0]
        dm = render_depth(scene, cam)
        img = make_posed_image(scene, cam, dm)
        inv = img.channels[..., 0][dm.hit_mask]
        assert inv.size and (inv > 0).all() and (inv <= 1).all()


class TestSelectViews:
    def setup_method(self):
        self.box = OrientedBox((0, 0, 0.5), (1, 1, 1), 0.0)

    def test_frustum_beats_outside(self):
        cam_a = frontal_camera()
        cam_b = look_at((-2.0, 0.0, 0.5), (-4.0, 0.0, 0.5), 40, 40, 16, 16, 33, 33)  # looking away
        sel = select_views(self.box, 1, [cam_b, cam_a])
        assert sel[0] is cam_a

    def test_k_equals_all_sorted_by_area(self):
        cams = [frontal_camera(fx=f) for f in (10.0, 40.0, 25.0)]
        sel = select_views(self.box, 3, cams)
        areas = [projected_box_area(self.box, c) for c in sel]
        assert areas == sorted(areas, reverse=True)

    def test_frontal_beats_oblique_for_flat_panel(self):
        panel = OrientedBox((0, 0, 0.5), (0.05, 1.0, 1.0), 0.0)
        frontal = look_at((-2.0, 0.0, 0.5), (0, 0, 0.5), 40, 40, 16, 16, 33, 33)
        oblique = look_at((-1.0, 1.732, 0.5), (0, 0, 0.5), 40, 40, 16, 16, 33, 33)  # 60 deg off
        sel = select_views(panel, 2, [oblique, frontal])
        assert sel[0] is frontal

    def test_invisible_everywhere_raises(self):
        cam = look_at((-2.0, 0.0, 0.5), (-4.0, 0.0, 0.5), 40, 40, 16, 16, 33, 33)
        with pytest.raises(ValueError, match="invisible"):
            select_views(self.box, 1, [cam])

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            select_views(self.box, 2, [frontal_camera()])


class TestExtractPartial:
    def test_frontal_face_only(self):
        scene = frontal_cube_scene()
        cam = frontal_camera(width=65, height=65, fx=80.0)
        dm = render_depth(scene, cam)
        pts = extract_partial([dm], [cam], scene.instances[0], noise_sigma=0.0)
        # only the x = -0.5 face is visible from the frontal camera
        assert np.abs(pts[:, 0] + 0.5).max() < 1e-6
        assert np.abs(pts).max() <= 0.5 + 1e-6

    def test_exact_roundtrip_without_noise(self):
        scene = frontal_cube_scene()
        cam = frontal_camera(width=65, height=65, fx=80.0)
        dm = render_depth(scene, cam)
        pts = extract_partial([dm], [cam], scene.instances[0], noise_sigma=0.0)
        shape = scene.instances[0].shape
        # visible face is x = -0.5: an inward (+x) nudge lands inside, an
        # outward (-x) nudge lands outside
        assert occupancy(shape, pts + np.array([1e-5, 0, 0])).all()
        assert not occupancy(shape, pts - np.array([1e-5, 0, 0])).any()

    def test_occluder_masks_half(self):
        # occluder covering the left (y > 0) half of the cube from the camera
        cube = frontal_cube_scene().instances[0]
        blocker_shape = Shape((__import__("trirecon").geom.Primitive("box", (0.05, 0.25, 0.5)),))
        blocker = ObjectInstance(
            blocker_shape, RigidScaleTransform(np.eye(3), (-1.2, 0.25, 0.5), 1.0), "cabinet"
        )
        scene = SceneSpec((cube, blocker), 4.0, 0)
        cam = frontal_camera(width=65, height=65, fx=80.0)
        dm = render_depth(scene, cam)
        pts = extract_partial([dm], [cam], cube, noise_sigma=0.0)
        frac_uncovered = (pts[:, 1] < 0).mean()
        assert frac_uncovered > 0.95

    def test_fully_occluded_raises(self):
        cube = frontal_cube_scene().instances[0]
        wall_shape = Shape((__import__("trirecon").geom.Primitive("box", (0.05, 2.0, 2.0)),))
        wall = ObjectInstance(wall_shape, RigidScaleTransform(np.eye(3), (-1.2, 0.0, 1.0), 1.0), "cabinet")
        scene = SceneSpec((cube, wall), 6.0, 0)
        cam = frontal_camera()
        dm = render_depth(scene, cam)
        with pytest.raises(ValueError, match="occluded"):
            extract_partial([dm], [cam], cube, noise_sigma=0.0)

    def test_noise_determinism(self):
        scene = frontal_cube_scene()
        cam = frontal_camera()
        dm = render_depth(scene, cam)
        a = extract_partial([dm], [cam], scene.instances[0], noise_sigma=0.01, seed=5)
        b = extract_partial([dm], [cam], scene.instances[0], noise_sigma=0.01, seed=5)
        c = extract_partial([dm], [cam], scene.instances[0], noise_sigma=0.01, seed=6)
        assert np.array_equal(a, b) and not np.array_equal(a, c)


def small_cfg(seed=0, n_scenes=3):
    return SynthConfig(
        master_seed=seed,
        n_scenes=n_scenes,
        objects_min=1,
        objects_max=2,
        image_size=32,
        n_candidate_cams=5,
        k_min=2,
        k_max=3,
        max_scan_points=2000,
        det_voxel_size=0.25,
        det_dims=(28, 28, 12),
    )


def dir_digest(root):
    import os

    h = hashlib.sha256()
    for dirpath, dirnames, filenames in sorted(os.walk(root)):
        dirnames.sort()
        for name in sorted(filenames):
            if name == "run.log":
                continue
            path = os.path.join(dirpath, name)
            h.update(os.path.relpath(path, root).encode())
            h.update(open(path, "rb").read())
    return h.hexdigest()


class TestDataset:
    def test_regeneration_bit_identical(self, tmp_path):
        cfg = small_cfg()
        d1, d2 = tmp_path / "a", tmp_path / "b"
        generate_dataset(str(d1), cfg)
        generate_dataset(str(d2), cfg)
        assert dir_digest(d1) == dir_digest(d2)

    def test_manifest_contents(self, tmp_path):
        cfg = small_cfg(seed=1, n_scenes=4)
        manifest = generate_dataset(str(tmp_path / "d"), cfg)
        header, scenes, bundles = read_manifest(manifest)
        assert header["config"]["n_scenes"] == 4
        assert len(scenes) == 4
        assert all(b["k"] >= 2 for b in bundles)
        splits = {b["split"] for b in bundles}
        assert splits <= {"train", "val", "test"}

    def test_bundle_roundtrip_and_invariants(self, tmp_path):
        cfg = small_cfg(seed=2)
        manifest = generate_dataset(str(tmp_path / "d"), cfg)
        _, _, bundles = read_manifest(manifest)
        assert bundles
        b = load_bundle(str(tmp_path / "d"), bundles[0])
        assert 2 <= len(b.images) <= 5
        assert b.partial.shape[1] == 3
        # every partial point is within 3*sigma + eps of the analytic surface
        shape = b.gt_shape
        spacing = 0.01
        surf, _ = sample_surface(shape, spacing)
        from scipy.spatial import cKDTree

        d, _ = cKDTree(surf).query(b.partial, k=1)
        assert d.max() <= 3 * cfg.noise_sigma + spacing

    def test_image_roundtrip(self, tmp_path):
        cfg = small_cfg(seed=3)
        manifest = generate_dataset(str(tmp_path / "d"), cfg)
        _, _, bundles = read_manifest(manifest)
        b = load_bundle(str(tmp_path / "d"), bundles[0])
        img = b.images[0]
        assert img.channels.shape == (32, 32, 4)
        assert img.camera.width == 32
