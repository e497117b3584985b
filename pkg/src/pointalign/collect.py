"""Triplet proxy collection: turn scene data plus 2D detections into aligned
(caption, image-embedding, point-proxy) training records.

Indoor scenes carry a depth image; the detection region is back-projected
through a foreground depth band. Outdoor scenes carry a lidar sweep; the
detection box is extruded into a frustum, clustered with DBSCAN and the
selected cluster becomes the point proxy. Image proxies are retained only as
their embedding vector, fetched from an :mod:`pointalign.embeddings` provider
under the crop key ``"{scene_id}:{index}:{caption}"``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .cluster import dbscan_labels, select_cluster
from .validation import as_points

DEFAULT_SCORE_THRESHOLD = 0.3

# skip reason codes
SKIP_EMPTY_FOREGROUND = "empty-foreground"
SKIP_TOO_FEW_POINTS = "too-few-points"
SKIP_EMPTY_FRUSTUM = "empty-frustum"
SKIP_ALL_NOISE = "all-noise"
SKIP_SMALL_CLUSTER = "small-cluster"


def check_vocabulary(captions):
    """Validate caption list: non-empty, unique after lowercase/trim."""
    captions = [str(c) for c in captions]
    if not captions:
        raise ValueError("vocabulary must contain at least one caption")
    seen = {}
    for i, cap in enumerate(captions):
        key = cap.strip().lower()
        if not key:
            raise ValueError(f"vocabulary entry {i} is blank")
        if key in seen:
            raise ValueError(f"duplicate vocabulary entry {cap!r} (rows {seen[key]} and {i})")
        seen[key] = i
    return captions


@dataclass
class TripletRecord:
    """One aligned language/image/point training sample."""

    caption_index: int
    image_embedding: np.ndarray  # (C,) float32
    points: np.ndarray  # (n, 3) float32
    scene_id: str
    instance_id: str


def crop_key(scene_id, det_index, caption):
    return f"{scene_id}:{det_index}:{caption}"


def _make_record(caption_index, vocabulary, embeddings, points, scene_id, det_index):
    caption = vocabulary[caption_index]
    vec = np.asarray(embeddings.embed_image(crop_key(scene_id, det_index, caption)), dtype=np.float32)
    return TripletRecord(
        caption_index=caption_index,
        image_embedding=vec,
        points=np.asarray(points, dtype=np.float32),
        scene_id=scene_id,
        instance_id=f"{scene_id}:{det_index}",
    )


def collect_indoor(
    depth,
    calib,
    detections,
    embeddings,
    vocabulary,
    scene_id,
    band_halfwidth=0.5,
    min_points=32,
):
    """Collect triplet records from one RGB-D scene.

    Returns ``(records, skips)`` where ``skips`` holds
    ``(instance_id, reason)`` pairs for detections that produced no proxy.
    """
    records, skips = [], []
    for det_index, box in enumerate(detections):
        if box.label_index >= len(vocabulary):
            raise ValueError(
                f"detection label_index {box.label_index} out of range for vocabulary "
                f"of size {len(vocabulary)}"
            )
        pts = geometry.backproject_depth(depth, calib, box, band_halfwidth=band_halfwidth)
        instance = f"{scene_id}:{det_index}"
        if pts.shape[0] == 0:
            skips.append((instance, SKIP_EMPTY_FOREGROUND))
            continue
        if pts.shape[0] < min_points:
            skips.append((instance, SKIP_TOO_FEW_POINTS))
            continue
        records.append(
            _make_record(box.label_index, vocabulary, embeddings, pts, scene_id, det_index)
        )
    return records, skips


def collect_outdoor(
    points,
    calib,
    detections,
    embeddings,
    vocabulary,
    scene_id,
    near=0.5,
    far=80.0,
    eps=0.5,
    min_samples=5,
    min_cluster_size=20,
):
    """Collect triplet records from one lidar sweep.

    Per detection: frustum extrusion, DBSCAN inside the frustum, then proxy
    cluster selection (largest, ties toward the frustum axis).
    """
    cloud = as_points(points)
    records, skips = [], []
    for det_index, box in enumerate(detections):
        if box.label_index >= len(vocabulary):
            raise ValueError(
                f"detection label_index {box.label_index} out of range for vocabulary "
                f"of size {len(vocabulary)}"
            )
        instance = f"{scene_id}:{det_index}"
        frustum = geometry.build_frustum(box, calib, near=near, far=far)
        inside = geometry.points_in_frustum(cloud, frustum)
        if inside.shape[0] == 0:
            skips.append((instance, SKIP_EMPTY_FRUSTUM))
            continue
        labels = dbscan_labels(inside, eps=eps, min_samples=min_samples)
        idx = select_cluster(
            inside,
            labels,
            axis=(frustum.axis_origin, frustum.axis_direction),
            min_size=min_cluster_size,
        )
        if idx is None:
            reason = SKIP_ALL_NOISE if labels.max() < 0 else SKIP_SMALL_CLUSTER
            skips.append((instance, reason))
            continue
        records.append(
            _make_record(box.label_index, vocabulary, embeddings, inside[idx], scene_id, det_index)
        )
    return records, skips


def repeat_factors(caption_ids, threshold=0.01):
    """Per-record repeat factor max(1, ceil(sqrt(threshold / class_frequency)))."""
    ids = np.asarray(caption_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("empty dataset")
    total = ids.size
    classes, counts = np.unique(ids, return_counts=True)
    per_class = {}
    for cls, count in zip(classes, counts):
        freq = count / total
        per_class[int(cls)] = max(1, math.ceil(math.sqrt(threshold / freq)))
    return np.array([per_class[int(c)] for c in ids], dtype=np.int64)


def balanced_indices(caption_ids, threshold=0.01, seed=0):
    """Infinite class-balanced index stream.

    Each epoch repeats record i ``repeat_factors(...)[i]`` times and shuffles
    the multiset; epochs are concatenated. Deterministic per seed.
    """
    factors = repeat_factors(caption_ids, threshold)
    base = np.repeat(np.arange(len(factors), dtype=np.int64), factors)
    rng = np.random.default_rng(seed)
    while True:
        for idx in rng.permutation(base):
            yield int(idx)


def balanced_epoch_length(caption_ids, threshold=0.01):
    """Number of draws in one epoch of :func:`balanced_indices`."""
    return int(repeat_factors(caption_ids, threshold).sum())
