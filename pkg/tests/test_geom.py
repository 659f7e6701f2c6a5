import numpy as np
import pytest
import torch

from trirecon.geom import (
    BOX,
    CYLINDER,
    ELLIPSOID,
    CameraModel,
    PlaneId,
    Primitive,
    RigidScaleTransform,
    Shape,
    apply_augmentation,
    backproject,
    bilinear_sample,
    load_camera,
    load_ply,
    look_at,
    normalize_to_unit,
    occupancy,
    project_image,
    project_triplane,
    sample_surface,
    save_camera,
    save_ply,
    shape_bounds,
    yaw_matrix,
)


def unit_box():
    return Shape((Primitive(BOX, (0.5, 0.5, 0.5)),))


def sphere(r=0.5, center=(0, 0, 0)):
    return Shape((Primitive(ELLIPSOID, (r, r, r), RigidScaleTransform(np.eye(3), center)),))


class TestOccupancy:
    def test_box_center_inside(self):
        assert occupancy(unit_box(), np.array([0.0, 0.0, 0.0]))

    def test_box_outside_half_extent(self):
        assert not occupancy(unit_box(), np.array([0.6, 0.0, 0.0]))

    def test_union_box_and_offset_sphere(self):
        # point (1, 0, 0.2) sits inside the r=0.3 sphere at (1,0,0): dist 0.2 < 0.3
        shape = Shape(unit_box().primitives + sphere(0.3, (1.0, 0.0, 0.0)).primitives)
        assert occupancy(shape, np.array([1.0, 0.0, 0.2]))
        assert not occupancy(shape, np.array([1.0, 0.0, 0.4]))

    def test_cylinder_membership(self):
        shape = Shape((Primitive(CYLINDER, (0.3, 0.5)),))
        assert occupancy(shape, np.array([0.2, 0.2, 0.4]))  # r=0.283 < 0.3
        assert not occupancy(shape, np.array([0.25, 0.25, 0.0]))  # r=0.354 > 0.3
        assert not occupancy(shape, np.array([0.0, 0.0, 0.6]))

    def test_rigid_invariance_random(self):
        # occupancy(T*S, T*p) == occupancy(S, p) for random shapes/transforms/points
        rng = np.random.default_rng(0)
        shape = Shape(
            (
                Primitive(BOX, (0.3, 0.2, 0.25)),
                Primitive(CYLINDER, (0.15, 0.3), RigidScaleTransform(yaw_matrix(0.7), (0.2, 0.1, 0.0))),
                Primitive(ELLIPSOID, (0.2, 0.3, 0.15), RigidScaleTransform(np.eye(3), (-0.2, 0.0, 0.1))),
            )
        )
        for _ in range(1000):
            p = rng.uniform(-0.6, 0.6, 3)
            angles = rng.uniform(-np.pi, np.pi)
            axis_rot = yaw_matrix(angles)
            t = RigidScaleTransform(axis_rot, rng.uniform(-1, 1, 3), rng.uniform(0.5, 2.0))
            assert occupancy(shape.transformed(t), t.apply(p)) == occupancy(shape, p)


class TestSampleSurface:
    def test_box_points_on_boundary(self):
        pts, _ = sample_surface(unit_box(), 0.02)
        assert np.allclose(np.abs(pts).max(axis=1), 0.5, atol=1e-9)

    def test_box_coarse_count(self):
        pts, _ = sample_surface(unit_box(), 0.5)
        assert len(pts) >= 24  # >= 4 per face; grids include corners

    def test_sphere_points_on_boundary(self):
        pts, _ = sample_surface(sphere(0.5), 0.02)
        assert np.allclose(np.linalg.norm(pts, axis=1), 0.5, atol=1e-9)

    def test_occupancy_flips_along_normal(self):
        shape = Shape(
            (
                Primitive(BOX, (0.4, 0.3, 0.2)),
                Primitive(CYLINDER, (0.2, 0.45), RigidScaleTransform(np.eye(3), (0.3, 0.0, 0.0))),
            )
        )
        spacing = 0.05
        pts, nrm = sample_surface(shape, spacing)
        eps = spacing / 10
        assert occupancy(shape, pts - eps * nrm).all()
        assert not occupancy(shape, pts + eps * nrm).any()

    def test_nn_spacing_bound(self):
        from scipy.spatial import cKDTree

        pts, _ = sample_surface(unit_box(), 0.1)
        d, _ = cKDTree(pts).query(pts, k=2)
        assert d[:, 1].max() <= 0.1 + 1e-9

    def test_deterministic_per_seed(self):
        a, _ = sample_surface(sphere(), 0.05, seed=3, jitter=0.3)
        b, _ = sample_surface(sphere(), 0.05, seed=3, jitter=0.3)
        c, _ = sample_surface(sphere(), 0.05, seed=4, jitter=0.3)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_degenerate_primitive_rejected(self):
        with pytest.raises(ValueError):
            Primitive(BOX, (0.5, 0.0, 0.5))

    def test_bounds_analytic(self):
        shape = Shape((Primitive(CYLINDER, (0.3, 0.5), RigidScaleTransform(yaw_matrix(0.3), (1, 2, 3), 2.0)),))
        lo, hi = shape_bounds(shape)
        pts, _ = sample_surface(shape, 0.02)
        assert (pts >= lo - 1e-9).all() and (pts <= hi + 1e-9).all()
        assert np.allclose(pts.min(axis=0), lo, atol=0.01)
        assert np.allclose(pts.max(axis=0), hi, atol=0.01)


class TestNormalize:
    def test_cube_scaling(self):
        pts = np.random.default_rng(0).uniform(0, 2, (500, 3))
        pts[0] = (0, 0, 0)
        pts[1] = (2, 2, 2)
        out, t = normalize_to_unit(pts)
        assert np.isclose(t.scale, 0.5)
        assert np.allclose(out.min(axis=0), -0.5) and np.allclose(out.max(axis=0), 0.5)

    def test_longest_axis_rule(self):
        pts = np.array([[0, 0, 0], [2, 1, 1], [0, 1, 0], [2, 0, 1.0]])
        out, _ = normalize_to_unit(pts)
        lo, hi = out.min(axis=0), out.max(axis=0)
        assert np.allclose(lo, [-0.5, -0.25, -0.25]) and np.allclose(hi, [0.5, 0.25, 0.25])

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(100, 3)) * [3, 1, 2] + 5
        once, t1 = normalize_to_unit(pts)
        twice, t2 = normalize_to_unit(once)
        assert np.allclose(once, twice)
        assert np.isclose(t2.scale, 1.0) and np.allclose(t2.translation, 0)
        assert (np.abs(once) <= 0.5 + 1e-9).all()

    def test_transform_maps_input_to_output(self):
        pts = np.random.default_rng(2).uniform(-3, 9, (50, 3))
        out, t = normalize_to_unit(pts)
        assert np.allclose(t.apply(pts), out)

    def test_degenerate_extent(self):
        with pytest.raises(ValueError, match="degenerate extent"):
            normalize_to_unit(np.ones((10, 3)))


class TestTriplaneProjection:
    def test_origin_maps_to_center(self):
        u, v, ok = project_triplane(np.zeros(3), PlaneId.XY)
        assert (u, v, ok) == (0.5, 0.5, True)

    def test_corner(self):
        u, v, ok = project_triplane(np.array([-0.5, -0.5, 0.3]), PlaneId.XY)
        assert (u, v, ok) == (0.0, 0.0, True)

    def test_xz_affine(self):
        u, v, ok = project_triplane(np.array([0.25, 0.0, -0.25]), PlaneId.XZ)
        assert np.isclose(u, 0.75) and np.isclose(v, 0.25) and ok

    def test_out_of_cube_clamps_and_flags(self):
        u, v, ok = project_triplane(np.array([0.7, 0.0, 0.0]), PlaneId.XY)
        assert u == 1.0 and not ok


class TestBilinear:
    def test_center_average(self):
        m = torch.tensor([[0.0, 1.0], [1.0, 2.0]]).unsqueeze(-1)
        out = bilinear_sample(m, torch.tensor([0.5, 0.5]))
        assert torch.isclose(out[0], torch.tensor(1.0))

    def test_corner_identity(self):
        m = torch.rand(4, 4, 3)
        out = bilinear_sample(m, torch.tensor([0.0, 0.0]))
        assert torch.allclose(out, m[0, 0])

    def test_constant_preservation(self):
        m = torch.full((5, 5, 2), 3.25)
        for uv in (torch.rand(10, 2), torch.tensor([0.123, 0.77])):
            assert torch.allclose(bilinear_sample(m, uv), torch.tensor(3.25))

    def test_out_of_range_clamps(self):
        m = torch.rand(3, 3, 1)
        out = bilinear_sample(m, torch.tensor([1.7, -0.2]))
        assert torch.allclose(out, m[2, 0])

    def test_linear_precision(self):
        # map values affine in texel coordinates are reproduced exactly
        h = w = 7
        r, c = torch.meshgrid(torch.arange(h, dtype=torch.float64), torch.arange(w, dtype=torch.float64),
                              indexing="ij")
        m = (2.0 * r - 0.5 * c + 1.25).unsqueeze(-1)
        uv = torch.rand(200, 2, dtype=torch.float64)
        out = bilinear_sample(m, uv)
        expected = 2.0 * uv[:, 0] * (h - 1) - 0.5 * uv[:, 1] * (w - 1) + 1.25
        assert torch.allclose(out.squeeze(-1), expected, atol=1e-6)

    def test_gradient_matches_central_differences(self):
        torch.manual_seed(0)
        m = torch.rand(6, 6, 2, dtype=torch.float64)
        uv = torch.tensor([0.31, 0.57], dtype=torch.float64, requires_grad=True)
        out = bilinear_sample(m, uv).sum()
        out.backward()
        h = 1e-5
        for d in range(2):
            delta = torch.zeros(2, dtype=torch.float64)
            delta[d] = h
            f1 = bilinear_sample(m, (uv + delta).detach()).sum()
            f0 = bilinear_sample(m, (uv - delta).detach()).sum()
            fd = (f1 - f0) / (2 * h)
            rel = abs(float(uv.grad[d]) - float(fd)) / max(abs(float(fd)), 1e-12)
            assert rel < 1e-4

    def test_gradient_wrt_map(self):
        torch.manual_seed(1)
        m = torch.rand(4, 4, 1, dtype=torch.float64, requires_grad=True)
        uv = torch.tensor([0.42, 0.77], dtype=torch.float64)
        bilinear_sample(m, uv).sum().backward()
        h = 1e-5
        idx = (1, 3, 0)
        with torch.no_grad():
            mp = m.clone(); mp[idx] += h
            mm = m.clone(); mm[idx] -= h
            fd = (bilinear_sample(mp, uv).sum() - bilinear_sample(mm, uv).sum()) / (2 * h)
        rel = abs(float(m.grad[idx]) - float(fd)) / max(abs(float(fd)), 1e-12)
        assert rel < 1e-4


class TestAugmentation:
    def test_identity(self):
        pts = np.random.default_rng(0).normal(size=(20, 3))
        assert np.allclose(apply_augmentation(pts, 0.0, 1.0, (0, 0, 0)), pts)

    def test_90deg_yaw(self):
        out = apply_augmentation(np.array([[0.5, 0.0, 0.0]]), 90.0, 1.0, (0, 0, 0))
        assert np.allclose(out, [[0.0, 0.5, 0.0]], atol=1e-9)

    def test_robustness_ranges_applicable(self):
        # the ranges used by the robustness harness apply cleanly
        pts = np.random.default_rng(1).uniform(-0.5, 0.5, (100, 3))
        out = apply_augmentation(pts, -10.0, 0.8, (0.1, -0.1, 0.05))
        assert out.shape == pts.shape and np.isfinite(out).all()
        out = apply_augmentation(pts, 10.0, 1.1, (-0.1, 0.1, -0.05))
        assert np.isfinite(out).all()

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            apply_augmentation(np.zeros((1, 3)), 0.0, 0.0, (0, 0, 0))


class TestCamera:
    def cam(self):
        w2c = RigidScaleTransform(np.eye(3), (0, 0, 0))
        return CameraModel(100.0, 100.0, 50.0, 50.0, 101, 101, w2c)

    def test_principal_point(self):
        u, v, d, ok = project_image(np.array([0.0, 0.0, 2.0]), self.cam())
        assert (u, v, d, ok) == (50.0, 50.0, 2.0, True)

    def test_behind_camera_invalid(self):
        *_, ok = project_image(np.array([0.0, 0.0, -1.0]), self.cam())
        assert not ok

    def test_pinhole_formula(self):
        u, v, d, ok = project_image(np.array([0.1, 0.0, 2.0]), self.cam())
        assert np.isclose(u, 55.0) and ok

    def test_roundtrip(self):
        cam = look_at((1.5, -2.0, 1.0), (0.0, 0.0, 0.5), 80.0, 80.0, 31.5, 31.5, 64, 64)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, (200, 3))
        u, v, d, ok = project_image(pts, cam)
        assert ok.any()
        back = backproject(u[ok], v[ok], d[ok], cam)
        assert np.abs(back - pts[ok]).max() < 1e-9

    def test_outside_image_invalid(self):
        u, v, d, ok = project_image(np.array([10.0, 0.0, 1.0]), self.cam())
        assert not ok

    def test_sidecar_roundtrip(self, tmp_path):
        cam = look_at((2.0, 1.0, 1.5), (0, 0, 0.3), 75.0, 76.0, 32.0, 30.0, 80, 72)
        path = tmp_path / "cam.txt"
        save_camera(path, cam)
        back = load_camera(path)
        assert (back.fx, back.fy, back.cx, back.cy) == (cam.fx, cam.fy, cam.cx, cam.cy)
        assert (back.width, back.height) == (cam.width, cam.height)
        assert np.allclose(back.world_to_camera.to_matrix(), cam.world_to_camera.to_matrix())


class TestPly:
    def test_roundtrip_points(self, tmp_path):
        pts = np.random.default_rng(0).normal(size=(123, 3))
        path = tmp_path / "p.ply"
        save_ply(path, pts)
        back, normals, faces = load_ply(path)
        assert normals is None and faces is None
        assert np.allclose(back, pts, atol=1e-6)

    def test_roundtrip_with_normals_and_faces(self, tmp_path):
        pts = np.random.default_rng(1).normal(size=(40, 3))
        nrm = np.zeros((40, 3))
        nrm[:, 2] = 1.0
        faces = np.array([[0, 1, 2], [3, 4, 5]])
        path = tmp_path / "m.ply"
        save_ply(path, pts, normals=nrm, faces=faces)
        bp, bn, bf = load_ply(path)
        assert np.allclose(bn, nrm)
        assert np.array_equal(bf, faces)

    def test_little_endian_binary_header(self, tmp_path):
        path = tmp_path / "h.ply"
        save_ply(path, np.zeros((1, 3)))
        head = path.read_bytes()[:64]
        assert b"binary_little_endian" in head
