"""Pinhole camera geometry: projection, depth back-projection, frustums, bounds.

Coordinate conventions used throughout the package:

* World/ego frame: the shared right-handed metric frame all 3D points live in.
  LiDAR sweeps are given in the lidar frame; RGB-D back-projections are
  returned in the world frame.
* ``camera_extrinsics`` is the camera pose: a 4x4 rigid transform taking
  camera-frame coordinates into the world frame. ``lidar_extrinsics`` takes
  lidar-frame coordinates into the world frame (identity for RGB-D setups).
* Pixel (u, v) with depth d means camera-frame z = d (not ray length).
  Intrinsics act after perspective division, so projecting a camera-frame
  point p gives u = (K p)[0] / p_z, v = (K p)[1] / p_z, d = p_z.
* Points with camera-frame depth <= 0 are behind the camera and are always
  excluded from projection results, never wrapped.

Box membership is closed on all four edges; frustum depth range is the open
interval (near, far).
"""

from dataclasses import dataclass, field

import numpy as np

from .validation import as_matrix, as_points


class CalibrationError(ValueError):
    """Raised when a camera calibration violates its invariants."""


def _check_rigid(m, name):
    if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
        raise CalibrationError(f"{name} bottom row must be [0, 0, 0, 1]")
    r = m[:3, :3]
    if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-6:
        raise CalibrationError(f"{name} rotation block is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > 1e-6:
        raise CalibrationError(f"{name} rotation block must have determinant +1")


@dataclass(frozen=True)
class CameraCalibration:
    """Intrinsics plus camera/lidar poses relative to the world frame."""

    intrinsics: np.ndarray
    camera_extrinsics: np.ndarray
    lidar_extrinsics: np.ndarray = None

    def __post_init__(self):
        k = as_matrix(self.intrinsics, (3, 3), "intrinsics")
        if not np.allclose(k[2], [0.0, 0.0, 1.0], atol=1e-12):
            raise CalibrationError("intrinsics bottom row must be [0, 0, 1]")
        if k[0, 0] == 0.0 or k[1, 1] == 0.0 or abs(np.linalg.det(k)) < 1e-12:
            raise CalibrationError("intrinsics must be invertible (nonzero focal lengths)")
        rc = as_matrix(self.camera_extrinsics, (4, 4), "camera_extrinsics")
        _check_rigid(rc, "camera_extrinsics")
        rl = self.lidar_extrinsics
        rl = np.eye(4) if rl is None else as_matrix(rl, (4, 4), "lidar_extrinsics")
        _check_rigid(rl, "lidar_extrinsics")
        for key, val in (("intrinsics", k), ("camera_extrinsics", rc), ("lidar_extrinsics", rl)):
            val.setflags(write=False)
            object.__setattr__(self, key, val)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.eye(4), np.eye(4))

    @property
    def world_to_camera(self):
        m = self.camera_extrinsics
        r = m[:3, :3]
        out = np.eye(4)
        out[:3, :3] = r.T
        out[:3, 3] = -r.T @ m[:3, 3]
        return out

    @property
    def camera_center_in_lidar(self):
        """Camera optical center expressed in the lidar/point frame."""
        center_world = self.camera_extrinsics[:3, 3]
        rl = self.lidar_extrinsics
        return rl[:3, :3].T @ (center_world - rl[:3, 3])


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned 2D image box with a detection score and class index."""

    u_min: float
    v_min: float
    u_max: float
    v_max: float
    score: float = 1.0
    label_index: int = 0

    def __post_init__(self):
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise ValueError(
                f"degenerate box ({self.u_min}, {self.v_min}, {self.u_max}, {self.v_max})"
            )
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.label_index < 0:
            raise ValueError("label_index must be non-negative")

    def contains_uv(self, u, v):
        """Closed-boundary membership test for pixel coordinates."""
        return (u >= self.u_min) & (u <= self.u_max) & (v >= self.v_min) & (v <= self.v_max)


def project_points(points, calib):
    """Project lidar/world points into the image.

    Applies lidar extrinsics, inverse camera extrinsics, then intrinsics.

    Returns ``(uvd, in_front)`` where ``in_front`` is a boolean mask over the
    input rows and ``uvd`` holds (u, v, depth) for the rows that survive the
    behind-camera cut (camera-frame depth > 0), in input order.
    """
    pts = as_points(points, allow_empty=True)
    m = calib.world_to_camera @ calib.lidar_extrinsics
    cam = pts @ m[:3, :3].T + m[:3, 3]
    in_front = cam[:, 2] > 0.0
    cam = cam[in_front]
    proj = cam @ calib.intrinsics.T
    z = cam[:, 2]
    uvd = np.column_stack([proj[:, 0] / z, proj[:, 1] / z, z])
    return uvd, in_front


def backproject_pixels(uvd, calib):
    """Map (u, v, depth) rows back to world-frame 3D points.

    Applies inverse intrinsics then the camera pose; the inverse of
    :func:`project_points` when the lidar extrinsics are identity.
    """
    uvd = np.asarray(uvd, dtype=np.float64)
    if uvd.ndim != 2 or uvd.shape[1] != 3:
        raise ValueError(f"uvd must have shape (n, 3), got {uvd.shape}")
    d = uvd[:, 2]
    hom = np.column_stack([uvd[:, 0] * d, uvd[:, 1] * d, d])
    cam = hom @ np.linalg.inv(calib.intrinsics).T
    rc = calib.camera_extrinsics
    return cam @ rc[:3, :3].T + rc[:3, 3]


def foreground_band(depths, halfwidth=0.5):
    """Depth interval (median - halfwidth, median + halfwidth) over valid depths.

    Stand-in for appearance-based foreground segmentation: keeps the dominant
    depth mode of a detection region and drops background pixels.
    """
    valid = depths[depths > 0.0]
    if valid.size == 0:
        return None
    med = float(np.median(valid))
    return med - halfwidth, med + halfwidth


def backproject_depth(depth, calib, region=None, band_halfwidth=0.5):
    """Back-project a depth-image region to world-frame points.

    ``depth`` is an (H, W) grid of meters where values <= 0 are invalid.
    ``region`` restricts to pixels inside a :class:`Box2D` (closed edges);
    the region must lie inside the image bounds. ``band_halfwidth`` selects
    foreground pixels whose depth falls within a band around the region's
    median depth (pass ``None`` to keep every valid pixel).

    Returns an (n, 3) array; empty when no pixel passes.
    """
    grid = np.asarray(depth, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"depth must be a 2D grid, got shape {grid.shape}")
    h, w = grid.shape
    if region is None:
        u0, v0, u1, v1 = 0, 0, w - 1, h - 1
    else:
        if region.u_min < 0 or region.v_min < 0 or region.u_max > w - 1 or region.v_max > h - 1:
            raise ValueError("region extends outside the image bounds")
        u0 = int(np.ceil(region.u_min))
        v0 = int(np.ceil(region.v_min))
        u1 = int(np.floor(region.u_max))
        v1 = int(np.floor(region.v_max))
    patch = grid[v0 : v1 + 1, u0 : u1 + 1]
    vv, uu = np.meshgrid(np.arange(v0, v1 + 1), np.arange(u0, u1 + 1), indexing="ij")
    d = patch.reshape(-1)
    keep = d > 0.0
    if band_halfwidth is not None:
        band = foreground_band(d, band_halfwidth)
        if band is None:
            return np.empty((0, 3), dtype=np.float64)
        keep &= (d >= band[0]) & (d <= band[1])
    if not np.any(keep):
        return np.empty((0, 3), dtype=np.float64)
    uvd = np.column_stack(
        [uu.reshape(-1)[keep].astype(np.float64), vv.reshape(-1)[keep].astype(np.float64), d[keep]]
    )
    return backproject_pixels(uvd, calib)


@dataclass(frozen=True)
class Frustum:
    """3D volume obtained by extruding an image box between near and far depth.

    Membership is defined by projection: a point is inside iff it projects in
    front of the camera, lands inside the (closed) box and its camera depth
    lies strictly inside (near, far). ``side_planes`` carries the equivalent
    four half-space planes in the point frame for geometric consumers.
    """

    box: Box2D
    calib: CameraCalibration
    near: float
    far: float
    side_planes: np.ndarray = field(repr=False, default=None)
    axis_origin: np.ndarray = field(repr=False, default=None)
    axis_direction: np.ndarray = field(repr=False, default=None)

    def contains(self, points):
        """Boolean membership mask over the input rows."""
        pts = as_points(points, allow_empty=True)
        out = np.zeros(pts.shape[0], dtype=bool)
        if pts.shape[0] == 0:
            return out
        uvd, in_front = project_points(pts, self.calib)
        d = uvd[:, 2]
        ok = self.box.contains_uv(uvd[:, 0], uvd[:, 1]) & (d > self.near) & (d < self.far)
        out[np.flatnonzero(in_front)[ok]] = True
        return out


def build_frustum(box, calib, near=0.5, far=80.0):
    """Extrude a 2D box through the camera into a 3D frustum.

    ``near``/``far`` bound the camera-frame depth; both must be positive with
    near < far.
    """
    if not 0.0 < near < far:
        raise ValueError(f"invalid frustum range: need 0 < near < far, got ({near}, {far})")
    k = calib.intrinsics
    m = calib.world_to_camera @ calib.lidar_extrinsics
    r, t = m[:3, :3], m[:3, 3]
    # Half-space normals in the camera frame: u >= u_min  <=>  (K0 - u_min*K2) . p >= 0
    normals_cam = np.stack(
        [
            k[0] - box.u_min * k[2],
            box.u_max * k[2] - k[0],
            k[1] - box.v_min * k[2],
            box.v_max * k[2] - k[1],
        ]
    )
    planes = np.empty((4, 4))
    planes[:, :3] = normals_cam @ r
    planes[:, 3] = normals_cam @ t
    center_uvd = np.array([[(box.u_min + box.u_max) / 2.0, (box.v_min + box.v_max) / 2.0, 1.0]])
    rl = calib.lidar_extrinsics
    axis_point = (backproject_pixels(center_uvd, calib)[0] - rl[:3, 3]) @ rl[:3, :3]
    origin = calib.camera_center_in_lidar
    direction = axis_point - origin
    direction = direction / np.linalg.norm(direction)
    for arr in (planes, origin, direction):
        arr.setflags(write=False)
    return Frustum(
        box=box,
        calib=calib,
        near=float(near),
        far=float(far),
        side_planes=planes,
        axis_origin=origin,
        axis_direction=direction,
    )


def points_in_frustum(points, frustum):
    """Order-preserving subset of the points inside the frustum."""
    pts = as_points(points, allow_empty=True)
    return pts[frustum.contains(pts)]


def aabb(points):
    """Componentwise (min, max) corners of the axis-aligned bounding box."""
    pts = as_points(points)
    return pts.min(axis=0), pts.max(axis=0)


def aabb_center(points):
    lo, hi = aabb(points)
    return (lo + hi) / 2.0
