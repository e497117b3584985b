"""Input validation helpers shared across the package."""

import numpy as np


def as_points(x, name="points", allow_empty=False):
    """Coerce to a float64 (n, 3) array and reject NaN/inf components."""
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {pts.shape}")
    if pts.shape[0] == 0 and not allow_empty:
        raise ValueError(f"{name} must not be empty")
    if pts.size and not np.all(np.isfinite(pts)):
        raise ValueError(f"{name} contains non-finite components")
    return pts


def as_matrix(x, shape, name="matrix"):
    """Coerce to a float64 array of a fixed shape with finite entries."""
    m = np.asarray(x, dtype=np.float64)
    if m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def check_unit_rows(m, name="embeddings", tol=1e-6):
    """Require every row of ``m`` to have unit L2 norm within ``tol``."""
    norms = np.linalg.norm(m, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ValueError(f"{name} rows must be unit-norm (worst deviation {worst:.2e})")


def unit_rows(m):
    """L2-normalize rows; raises on zero-norm rows."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize zero-norm row")
    return m / norms
