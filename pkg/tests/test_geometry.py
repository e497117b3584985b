import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointalign.geometry import (
    Box2D,
    CalibrationError,
    CameraCalibration,
    aabb,
    aabb_center,
    backproject_depth,
    backproject_pixels,
    build_frustum,
    foreground_band,
    points_in_frustum,
    project_points,
)
from reference import frustum_oracle, random_intrinsics, random_rigid


def pinhole(f=2.0, cx=1.0, cy=1.0):
    return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])


def rigid_calib(seed, with_lidar=False):
    rng = np.random.default_rng(seed)
    lidar = random_rigid(rng) if with_lidar else np.eye(4)
    return CameraCalibration(random_intrinsics(rng), random_rigid(rng), lidar)


class TestCalibration:
    def test_identity_roundtrip_point(self):
        calib = CameraCalibration.identity()
        uvd, mask = project_points([[0.0, 0.0, 1.0]], calib)
        assert mask.all()
        np.testing.assert_allclose(uvd, [[0.0, 0.0, 1.0]])

    def test_singular_intrinsics_rejected(self):
        k = np.eye(3)
        k[0, 0] = 0.0
        with pytest.raises(CalibrationError):
            CameraCalibration(k, np.eye(4))

    def test_non_orthonormal_rotation_rejected(self):
        ext = np.eye(4)
        ext[0, 0] = 1.5
        with pytest.raises(CalibrationError):
            CameraCalibration(np.eye(3), ext)

    def test_reflection_rejected(self):
        ext = np.eye(4)
        ext[0, 0] = -1.0  # orthonormal but det -1
        with pytest.raises(CalibrationError):
            CameraCalibration(np.eye(3), ext)

    def test_intrinsics_bottom_row_checked(self):
        k = np.eye(3)
        k[2, 0] = 0.5
        with pytest.raises(CalibrationError):
            CameraCalibration(k, np.eye(4))


class TestBackprojection:
    def test_identity_pixel(self):
        calib = CameraCalibration.identity()
        pts = backproject_pixels([[0.0, 0.0, 1.0]], calib)
        np.testing.assert_allclose(pts, [[0.0, 0.0, 1.0]])

    def test_hand_computed_pinhole_inverse(self):
        # x = (u - cx) * d / f, y = (v - cy) * d / f, z = d
        calib = CameraCalibration(pinhole(f=2.0, cx=1.0, cy=1.0), np.eye(4))
        pts = backproject_pixels([[3.0, 1.0, 4.0]], calib)
        np.testing.assert_allclose(pts, [[4.0, 0.0, 4.0]])
        # cross-check: projecting the result recovers the pixel
        uvd, mask = project_points(pts, calib)
        assert mask.all()
        np.testing.assert_allclose(uvd, [[3.0, 1.0, 4.0]])

    def test_all_invalid_depth_region_empty(self):
        depth = np.zeros((10, 10))
        box = Box2D(2.0, 2.0, 7.0, 7.0)
        out = backproject_depth(depth, CameraCalibration.identity(), box)
        assert out.shape == (0, 3)

    def test_depth_grid_roundtrip(self):
        calib = rigid_calib(3)
        rng = np.random.default_rng(7)
        depth = rng.uniform(1.0, 5.0, size=(12, 16))
        pts = backproject_depth(depth, calib, band_halfwidth=None)
        assert pts.shape == (12 * 16, 3)
        uvd, mask = project_points(pts, calib)
        assert mask.all()
        grid_v, grid_u = np.meshgrid(np.arange(12), np.arange(16), indexing="ij")
        np.testing.assert_allclose(uvd[:, 0], grid_u.reshape(-1), atol=1e-6)
        np.testing.assert_allclose(uvd[:, 1], grid_v.reshape(-1), atol=1e-6)
        np.testing.assert_allclose(uvd[:, 2], depth.reshape(-1), atol=1e-9)

    def test_region_outside_bounds_rejected(self):
        depth = np.ones((10, 10))
        with pytest.raises(ValueError):
            backproject_depth(depth, CameraCalibration.identity(), Box2D(5.0, 5.0, 12.0, 8.0))

    def test_foreground_band_drops_background(self):
        depth = np.full((20, 20), 6.0)
        depth[5:15, 5:15] = 2.0  # foreground object
        box = Box2D(3.0, 3.0, 16.0, 16.0)
        pts = backproject_depth(depth, CameraCalibration.identity(), box, band_halfwidth=0.5)
        # 10x10 object pixels survive; wall pixels at 6 m do not
        assert pts.shape[0] == 100
        assert np.all(np.abs(pts[:, 2] - 2.0) < 1e-9)

    def test_foreground_band_helper(self):
        assert foreground_band(np.array([0.0, -1.0])) is None
        lo, hi = foreground_band(np.array([2.0, 2.2, 1.9, 0.0]), halfwidth=0.5)
        assert lo == pytest.approx(1.5)
        assert hi == pytest.approx(2.5)


class TestProjection:
    def test_behind_camera_excluded(self):
        calib = CameraCalibration.identity()
        uvd, mask = project_points([[0.0, 0.0, -1.0], [0.0, 0.0, 2.0]], calib)
        assert list(mask) == [False, True]
        assert uvd.shape == (1, 3)

    @settings(deadline=None, max_examples=25)
    @given(seed=st.integers(0, 10_000))
    def test_roundtrip_random_rigid(self, seed):
        calib = rigid_calib(seed)
        rng = np.random.default_rng(seed + 1)
        cam_pts = np.column_stack(
            [rng.uniform(-5, 5, 200), rng.uniform(-5, 5, 200), rng.uniform(0.3, 60.0, 200)]
        )
        r = calib.camera_extrinsics
        world = cam_pts @ r[:3, :3].T + r[:3, 3]
        uvd, mask = project_points(world, calib)
        assert mask.all()
        back = backproject_pixels(uvd, calib)
        assert np.max(np.abs(back - world)) < 1e-6

    def test_lidar_extrinsics_chain(self):
        calib = rigid_calib(11, with_lidar=True)
        rng = np.random.default_rng(5)
        cam_pts = np.column_stack(
            [rng.uniform(-2, 2, 50), rng.uniform(-2, 2, 50), rng.uniform(0.5, 20.0, 50)]
        )
        rc, rl = calib.camera_extrinsics, calib.lidar_extrinsics
        world = cam_pts @ rc[:3, :3].T + rc[:3, 3]
        lidar = (world - rl[:3, 3]) @ rl[:3, :3]
        uvd, mask = project_points(lidar, calib)
        assert mask.all()
        # back-projection lands in the world frame, i.e. lidar_extrinsics @ input
        back = backproject_pixels(uvd, calib)
        assert np.max(np.abs(back - world)) < 1e-6

    def test_depth_ordering_preserved_along_ray(self):
        calib = rigid_calib(23)
        rng = np.random.default_rng(2)
        direction = np.array([0.1, -0.2, 1.0])
        depths = np.sort(rng.uniform(0.5, 40.0, 30))
        cam_pts = depths[:, None] * direction / direction[2]
        r = calib.camera_extrinsics
        world = cam_pts @ r[:3, :3].T + r[:3, 3]
        uvd, mask = project_points(world, calib)
        assert mask.all()
        assert np.all(np.diff(uvd[:, 2]) > 0)


class TestFrustum:
    def test_full_image_box_contains_in_range(self):
        calib = CameraCalibration(pinhole(f=100.0, cx=50.0, cy=50.0), np.eye(4))
        box = Box2D(0.0, 0.0, 100.0, 100.0)
        frustum = build_frustum(box, calib, near=0.1, far=100.0)
        rng = np.random.default_rng(0)
        z = rng.uniform(0.2, 90.0, 500)
        pts = np.column_stack([z * rng.uniform(-0.4, 0.4, 500), z * rng.uniform(-0.4, 0.4, 500), z])
        assert frustum.contains(pts).all()

    def test_exact_corner_is_inside(self):
        calib = CameraCalibration(pinhole(f=2.0, cx=0.0, cy=0.0), np.eye(4))
        box = Box2D(-2.0, -2.0, 2.0, 2.0)
        frustum = build_frustum(box, calib, near=1.0, far=10.0)
        # u = 2x/z: point (4, 4, 4) projects exactly to the (2, 2) corner
        assert frustum.contains([[4.0, 4.0, 4.0]]).all()
        # just outside the edge is excluded
        assert not frustum.contains([[4.0 + 1e-9, 4.0, 4.0]]).any()

    def test_depth_range_is_open(self):
        calib = CameraCalibration.identity()
        frustum = build_frustum(Box2D(-1.0, -1.0, 1.0, 1.0), calib, near=1.0, far=2.0)
        assert not frustum.contains([[0.0, 0.0, 1.0]]).any()
        assert not frustum.contains([[0.0, 0.0, 2.0]]).any()
        assert frustum.contains([[0.0, 0.0, 1.5]]).all()

    def test_invalid_range_rejected(self):
        calib = CameraCalibration.identity()
        with pytest.raises(ValueError):
            build_frustum(Box2D(0.0, 0.0, 1.0, 1.0), calib, near=5.0, far=5.0)
        with pytest.raises(ValueError):
            build_frustum(Box2D(0.0, 0.0, 1.0, 1.0), calib, near=-1.0, far=5.0)

    def test_membership_matches_oracle(self):
        rng = np.random.default_rng(99)
        calib = rigid_calib(42, with_lidar=True)
        pts = rng.uniform(-30.0, 30.0, size=(1000, 3))
        for k in range(10):
            u0, v0 = rng.uniform(0, 400, 2)
            box = Box2D(u0, v0, u0 + rng.uniform(5, 200), v0 + rng.uniform(5, 200))
            near = rng.uniform(0.1, 2.0)
            far = near + rng.uniform(5.0, 60.0)
            frustum = build_frustum(box, calib, near=near, far=far)
            got = frustum.contains(pts)
            want = frustum_oracle(pts, box, calib, near, far)
            np.testing.assert_array_equal(got, want)

    def test_side_planes_agree_with_membership(self):
        calib = rigid_calib(17, with_lidar=True)
        box = Box2D(100.0, 80.0, 300.0, 260.0)
        frustum = build_frustum(box, calib, near=0.5, far=50.0)
        rng = np.random.default_rng(3)
        pts = rng.uniform(-20, 20, size=(400, 3))
        inside_planes = np.all(
            pts @ frustum.side_planes[:, :3].T + frustum.side_planes[:, 3] >= 0, axis=1
        )
        # combine with the depth slab to get full membership
        uvd_all = np.full(pts.shape[0], -1.0)
        uvd, mask = project_points(pts, calib)
        uvd_all[mask] = uvd[:, 2]
        expected = inside_planes & (uvd_all > frustum.near) & (uvd_all < frustum.far)
        np.testing.assert_array_equal(frustum.contains(pts), expected)

    def test_points_in_frustum_preserves_order(self):
        calib = CameraCalibration.identity()
        frustum = build_frustum(Box2D(-10.0, -10.0, 10.0, 10.0), calib, near=0.5, far=10.0)
        pts = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 20.0], [0.1, 0.1, 2.0], [0.0, 0.0, 3.0]])
        out = points_in_frustum(pts, frustum)
        np.testing.assert_allclose(out, [[0.0, 0.0, 1.0], [0.1, 0.1, 2.0], [0.0, 0.0, 3.0]])

    def test_axis_points_down_the_box_center(self):
        calib = CameraCalibration.identity()
        frustum = build_frustum(Box2D(-1.0, -1.0, 1.0, 1.0), calib, near=0.5, far=10.0)
        np.testing.assert_allclose(frustum.axis_origin, [0.0, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(frustum.axis_direction, [0.0, 0.0, 1.0], atol=1e-12)


class TestAabb:
    def test_single_point(self):
        lo, hi = aabb([[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(lo, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(hi, [1.0, 2.0, 3.0])

    def test_two_points(self):
        lo, hi = aabb([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
        np.testing.assert_allclose(lo, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(hi, [1.0, 2.0, 3.0])

    def test_contains_every_point(self):
        pts = np.random.default_rng(0).normal(size=(200, 3))
        lo, hi = aabb(pts)
        assert np.all(pts >= lo) and np.all(pts <= hi)

    @settings(deadline=None, max_examples=25)
    @given(seed=st.integers(0, 10_000))
    def test_translation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(30, 3))
        shift = rng.normal(size=3)
        lo, hi = aabb(pts)
        lo2, hi2 = aabb(pts + shift)
        np.testing.assert_allclose(lo2, lo + shift, atol=1e-12)
        np.testing.assert_allclose(hi2, hi + shift, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aabb(np.empty((0, 3)))

    def test_center_is_box_center(self):
        c = aabb_center([[0.0, 0.0, 0.0], [2.0, 4.0, 6.0]])
        np.testing.assert_allclose(c, [1.0, 2.0, 3.0])


def test_nan_points_rejected():
    with pytest.raises(ValueError):
        project_points([[np.nan, 0.0, 1.0]], CameraCalibration.identity())
