"""Density clustering used to isolate the object inside a frustum.

Semantics are pinned for reproducibility:

* neighborhoods are closed (distance <= eps) and self-counting, so a point is
  a core point iff at least ``min_samples`` points (itself included) lie
  within eps of it;
* clusters are the density-connected components of core points plus their
  border points;
* cluster ids are assigned contiguously from 0 in scan order of each
  component's first core point, and a border point reachable from several
  clusters joins the lowest-id one.

Given identical input order the labeling is therefore fully deterministic.
"""

from collections import defaultdict, deque

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .validation import as_points


def _neighborhoods(pts, eps):
    """Exact closed-ball neighbor lists, accelerated by a uniform grid."""
    n = pts.shape[0]
    cells = np.floor(pts / eps).astype(np.int64)
    grid = defaultdict(list)
    for i, key in enumerate(map(tuple, cells)):
        grid[key].append(i)
    offsets = [
        (dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
    ]
    eps2 = eps * eps
    neighbors = []
    for i in range(n):
        cx, cy, cz = cells[i]
        cand = []
        for dx, dy, dz in offsets:
            cand.extend(grid.get((cx + dx, cy + dy, cz + dz), ()))
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        diff = pts[cand] - pts[i]
        within = np.einsum("ij,ij->i", diff, diff) <= eps2
        neighbors.append(cand[within])
    return neighbors


def dbscan_labels(points, eps, min_samples=5):
    """Label points with DBSCAN cluster ids; -1 marks noise.

    Returns an int array aligned with the input rows.
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if min_samples < 1:
        raise ValueError(f"min_samples must be >= 1, got {min_samples}")
    pts = as_points(points, allow_empty=True)
    n = pts.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    neighbors = _neighborhoods(pts, float(eps))
    core = np.array([len(nb) >= min_samples for nb in neighbors])
    cluster = 0
    for seed in range(n):
        if labels[seed] != -1 or not core[seed]:
            continue
        labels[seed] = cluster
        queue = deque([seed])
        while queue:
            q = queue.popleft()
            for nb in neighbors[q]:
                if labels[nb] == -1:
                    labels[nb] = cluster
                    if core[nb]:
                        queue.append(nb)
        cluster += 1
    return labels


class DBSCAN(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`dbscan_labels`.

    Parameters
    ----------
    eps : float
        Closed neighborhood radius in meters.
    min_samples : int
        Minimum self-counting neighborhood size of a core point.
    """

    def __init__(self, eps=0.5, min_samples=5):
        self.eps = eps
        self.min_samples = min_samples

    def fit(self, X, y=None):
        self.labels_ = dbscan_labels(X, self.eps, self.min_samples)
        self.n_clusters_ = int(self.labels_.max()) + 1 if self.labels_.size else 0
        return self


def _axis_distance(point, origin, direction):
    rel = point - origin
    return float(np.linalg.norm(rel - np.dot(rel, direction) * direction))


def select_cluster(points, labels, axis=None, min_size=1):
    """Pick the proxy cluster: largest first, then nearest to the frustum axis.

    ``axis`` is an optional (origin, direction) pair; ties on size are broken
    by smaller centroid-to-axis distance, then by lower cluster id. Returns
    the indices of the chosen cluster, or ``None`` when everything is noise
    or the winner has fewer than ``min_size`` points.
    """
    pts = as_points(points, allow_empty=True)
    labels = np.asarray(labels)
    if labels.shape[0] != pts.shape[0]:
        raise ValueError("labels must align with points")
    n_clusters = int(labels.max()) + 1 if labels.size else 0
    if n_clusters == 0:
        return None
    best = None
    for cid in range(n_clusters):
        idx = np.flatnonzero(labels == cid)
        size = idx.shape[0]
        if axis is not None:
            dist = _axis_distance(pts[idx].mean(axis=0), axis[0], axis[1])
        else:
            dist = 0.0
        key = (-size, dist, cid)
        if best is None or key < best[0]:
            best = (key, idx)
    idx = best[1]
    if idx.shape[0] < min_size:
        return None
    return idx
