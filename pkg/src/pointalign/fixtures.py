"""Synthetic scene generation for desk-scale experiments and tests.

Scenes contain objects with class-characteristic shapes (boxes, spheres,
pillars outdoors; flat squares, domes, tall rectangles indoors) at known
poses, together with matching detections, ground-truth labels/centers, a
caption vocabulary and a precomputed embedding file whose class anchors are
exactly orthonormal. Everything is deterministic per seed.
"""

import os

import numpy as np

from . import io
from .collect import crop_key
from .embeddings import SyntheticEmbeddingProvider
from .geometry import (
    Box2D,
    CameraCalibration,
    aabb_center,
    backproject_pixels,
    project_points,
)
from .zero_shot import DEFAULT_TEMPLATE

BASE_CAPTIONS = ["crate", "ball", "post", "cone", "slab", "ring", "rod", "dome"]

OUTDOOR_INTRINSICS = np.array([[500.0, 0.0, 320.0], [0.0, 500.0, 240.0], [0.0, 0.0, 1.0]])
OUTDOOR_IMAGE = (640, 480)
INDOOR_INTRINSICS = np.array([[140.0, 0.0, 80.0], [0.0, 140.0, 60.0], [0.0, 0.0, 1.0]])
INDOOR_IMAGE = (160, 120)


def default_captions(n_classes):
    names = list(BASE_CAPTIONS[:n_classes])
    while len(names) < n_classes:
        names.append(f"shape{len(names)}")
    return names


def _box_surface(rng, half_extents, n):
    """Uniform-ish samples on the surface of an axis-aligned box."""
    hx, hy, hz = half_extents
    areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * np.array(half_extents)
    for face in range(6):
        axis, sign = divmod(face, 2)
        sel = faces == face
        pts[sel, axis] = (1.0 if sign == 0 else -1.0) * (hx, hy, hz)[axis]
    return pts


def _sphere_surface(rng, radius, n):
    vec = rng.standard_normal((n, 3))
    vec /= np.linalg.norm(vec, axis=1, keepdims=True)
    return vec * radius


def _outdoor_object(rng, shape_kind, n_points):
    if shape_kind == 0:  # crate
        half = rng.uniform(0.4, 0.8) * rng.uniform(0.9, 1.1, size=3)
        pts = _box_surface(rng, half, n_points)
        extent_y = half[1]
    elif shape_kind == 1:  # ball
        radius = rng.uniform(0.45, 0.9)
        pts = _sphere_surface(rng, radius, n_points)
        extent_y = radius
    else:  # post
        half = np.array([0.15, rng.uniform(1.25, 1.75), 0.15])
        pts = _box_surface(rng, half, n_points)
        extent_y = half[1]
    pts += rng.normal(0.0, 0.01, size=pts.shape)
    return pts, extent_y


def _outdoor_calibration():
    cam = np.eye(4)
    cam[:3, 3] = [0.0, -0.3, 0.0]  # camera 0.3 m above the lidar origin (y is down)
    return CameraCalibration(OUTDOOR_INTRINSICS, cam, np.eye(4))


GROUND_Y = 1.5
HOVER_CLEARANCE = 0.8  # keeps every object point > eps away from ground noise


def _make_outdoor_scene(rng, scene_id, object_classes, n_points):
    """One lidar sweep: up to three objects on distinct image slots plus
    sparse ground points that DBSCAN must reject as noise."""
    calib = _outdoor_calibration()
    width, height = OUTDOOR_IMAGE
    slots = [-4.0, 0.0, 4.0]
    depths = np.array([9.0, 13.0, 17.0])
    rng.shuffle(depths)
    clouds, boxes, labels = [], [], []
    for i, cls in enumerate(object_classes):
        pts, extent_y = _outdoor_object(rng, cls % 3, n_points)
        x = slots[i] + rng.uniform(-0.25, 0.25)
        z = depths[i] + rng.uniform(-0.6, 0.6)
        y = GROUND_Y - HOVER_CLEARANCE - extent_y  # object bottom hovers above ground
        pts = pts + np.array([x, y, z])
        pts = pts.astype(np.float32)
        uvd, in_front = project_points(pts, calib)
        assert bool(in_front.all())
        box = Box2D(
            u_min=float(max(0.0, uvd[:, 0].min() - 2.0)),
            v_min=float(max(0.0, uvd[:, 1].min() - 2.0)),
            u_max=float(min(width - 1.0, uvd[:, 0].max() + 2.0)),
            v_max=float(min(height - 1.0, uvd[:, 1].max() + 2.0)),
            score=0.9,
            label_index=int(cls),
        )
        clouds.append(pts)
        boxes.append(box)
        labels.append((f"{scene_id}:{i}", int(cls), aabb_center(pts)))
    gx = np.arange(-8.0, 8.0, 1.5)
    gz = np.arange(6.0, 20.0, 1.5)
    xs, zs = np.meshgrid(gx, gz)
    ground = np.column_stack(
        [
            xs.reshape(-1) + rng.uniform(-0.2, 0.2, xs.size),
            np.full(xs.size, GROUND_Y) + rng.normal(0.0, 0.02, xs.size),
            zs.reshape(-1) + rng.uniform(-0.2, 0.2, xs.size),
        ]
    ).astype(np.float32)
    cloud = np.vstack(clouds + [ground])
    return cloud, calib, boxes, labels


def _indoor_patch(rng, shape_kind):
    """Foreground depth patch (mask + per-pixel depth) for one object."""
    d0 = rng.uniform(1.3, 2.3)
    if shape_kind == 0:  # flat square
        side = rng.integers(30, 41)
        mask = np.ones((side, side), dtype=bool)
        depth = np.full((side, side), d0)
    elif shape_kind == 1:  # dome bulging toward the camera
        r = int(rng.integers(14, 21))
        side = 2 * r + 1
        yy, xx = np.meshgrid(np.arange(side) - r, np.arange(side) - r, indexing="ij")
        rho2 = (xx**2 + yy**2) / float(r * r)
        mask = rho2 <= 1.0
        depth = np.full((side, side), d0)
        depth[mask] = d0 - 0.35 * np.sqrt(1.0 - rho2[mask])
    else:  # tall rectangle
        w = int(rng.integers(12, 17))
        h = int(rng.integers(48, 61))
        mask = np.ones((h, w), dtype=bool)
        depth = np.full((h, w), d0)
    depth = depth + rng.normal(0.0, 0.01, size=depth.shape)
    return mask, depth


def _make_indoor_scene(rng, scene_id, object_classes, n_points):
    """One RGB-D frame with a single foreground object against a far wall."""
    del n_points  # indoor proxies take every foreground pixel
    width, height = INDOOR_IMAGE
    calib = CameraCalibration(INDOOR_INTRINSICS, np.eye(4), np.eye(4))
    uu, vv = np.meshgrid(np.arange(width), np.arange(height))
    grid = 4.2 + 0.002 * (uu + vv)  # slanted background wall
    cls = int(object_classes[0])
    mask, patch = _indoor_patch(rng, cls % 3)
    ph, pw = mask.shape
    v0 = int(rng.integers(8, height - ph - 8))
    u0 = int(rng.integers(8, width - pw - 8))
    region = grid[v0 : v0 + ph, u0 : u0 + pw]
    region[mask] = patch[mask]
    grid = grid.astype(np.float32).astype(np.float64)
    box = Box2D(
        u_min=float(max(0.0, u0 - 2)),
        v_min=float(max(0.0, v0 - 2)),
        u_max=float(min(width - 1.0, u0 + pw + 1)),
        v_max=float(min(height - 1.0, v0 + ph + 1)),
        score=0.9,
        label_index=cls,
    )
    vs, us = np.nonzero(mask)
    uvd = np.column_stack(
        [(us + u0).astype(np.float64), (vs + v0).astype(np.float64), grid[vs + v0, us + u0]]
    )
    true_points = backproject_pixels(uvd, calib).astype(np.float32)
    labels = [(f"{scene_id}:0", cls, aabb_center(true_points))]
    return grid, calib, [box], labels


def _write_split(out_dir, split, rng, instances, scene_type, n_points, captions, crop_keys):
    split_dir = os.path.join(out_dir, split)
    scenes_dir = os.path.join(split_dir, "scenes")
    os.makedirs(scenes_dir, exist_ok=True)
    per_scene = 3 if scene_type == "outdoor" else 1
    detections, labels = [], []
    order = np.array(instances, dtype=np.int64)
    rng.shuffle(order)
    chunks = [order[i : i + per_scene] for i in range(0, len(order), per_scene)]
    for s, chunk in enumerate(chunks):
        scene_id = f"{split}_{s:03d}"
        if scene_type == "outdoor":
            cloud, calib, boxes, scene_labels = _make_outdoor_scene(rng, scene_id, chunk, n_points)
            io.write_point_cloud(os.path.join(scenes_dir, f"{scene_id}.pcf"), cloud)
        else:
            grid, calib, boxes, scene_labels = _make_indoor_scene(rng, scene_id, chunk, n_points)
            io.write_depth_image(os.path.join(scenes_dir, f"{scene_id}.dpt"), grid)
        io.write_calibration(os.path.join(scenes_dir, f"{scene_id}.calib"), calib)
        for i, box in enumerate(boxes):
            detections.append((scene_id, box))
            crop_keys.append(crop_key(scene_id, i, captions[box.label_index]))
        for inst, cls, center in scene_labels:
            labels.append((inst, captions[cls], center))
    io.write_detections(os.path.join(split_dir, "detections.tsv"), detections)
    io.write_labels(os.path.join(split_dir, "labels.tsv"), labels)
    return len(chunks), len(labels)


def make_fixture(
    out_dir,
    n_classes=3,
    per_class=20,
    test_per_class=5,
    embed_dim=32,
    seed=0,
    scene_type="outdoor",
    points_per_object=260,
    captions=None,
):
    """Generate a train/test fixture tree under ``out_dir``.

    Returns a summary dict with scene and instance counts per split.
    """
    if scene_type not in ("outdoor", "indoor"):
        raise ValueError(f"scene_type must be 'outdoor' or 'indoor', got {scene_type!r}")
    if n_classes < 1 or per_class < 1:
        raise ValueError("need at least one class and one object per class")
    captions = list(captions) if captions is not None else default_captions(n_classes)
    if len(captions) != n_classes:
        raise ValueError(f"need {n_classes} captions, got {len(captions)}")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    crop_keys = []
    summary = {"classes": n_classes, "splits": {}}
    for split, count in (("train", per_class), ("test", test_per_class)):
        if count < 1:
            continue
        instances = [cls for cls in range(n_classes) for _ in range(count)]
        n_scenes, n_instances = _write_split(
            out_dir, split, rng, instances, scene_type, points_per_object, captions, crop_keys
        )
        summary["splits"][split] = {"scenes": n_scenes, "instances": n_instances}
    io.write_vocabulary(os.path.join(out_dir, "vocab.txt"), captions)
    provider = SyntheticEmbeddingProvider(captions, dim=embed_dim, seed=seed)
    table = provider.export_table(
        text_keys=[DEFAULT_TEMPLATE.format(c) for c in captions], image_keys=crop_keys
    )
    io.write_embeddings(os.path.join(out_dir, "embeddings.emb"), embed_dim, table)
    summary["embedding_dim"] = embed_dim
    summary["vocabulary"] = captions
    return summary
