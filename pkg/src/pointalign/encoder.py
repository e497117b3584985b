"""Trainable point-set encoder with hand-written exact gradients.

A single-scale PointNet-style network: shared per-point MLP (3 -> h1 -> h2,
ReLU after each layer), coordinatewise max-pool over points, projection head
(h2 -> h3 -> C, ReLU then linear), then L2 normalization of the output. The
max-pool makes the embedding exactly permutation-invariant; argmax ties route
gradient to the lowest point index.
"""

from dataclasses import dataclass, fields

import numpy as np

from .validation import as_points


class DegenerateEmbeddingError(ArithmeticError):
    """The pre-normalization embedding collapsed to (near) zero norm."""


@dataclass
class EncoderParams:
    """Weights of the encoder; also reused as the gradient container."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray

    def layers(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    @property
    def hidden_sizes(self):
        return self.w1.shape[0], self.w2.shape[0], self.w3.shape[0]

    @property
    def embed_dim(self):
        return self.w4.shape[0]

    def copy(self):
        return EncoderParams(*(arr.copy() for _, arr in self.layers()))


def _glorot(rng, fan_out, fan_in):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in))


def init_params(hidden1=64, hidden2=128, hidden3=128, embed_dim=64, seed=0):
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    return EncoderParams(
        w1=_glorot(rng, hidden1, 3),
        b1=np.zeros(hidden1),
        w2=_glorot(rng, hidden2, hidden1),
        b2=np.zeros(hidden2),
        w3=_glorot(rng, hidden3, hidden2),
        b3=np.zeros(hidden3),
        w4=_glorot(rng, embed_dim, hidden3),
        b4=np.zeros(embed_dim),
    )


def zeros_like_params(params):
    return EncoderParams(*(np.zeros_like(arr) for _, arr in params.layers()))


def sample_points(points, n, seed):
    """Sample n points and normalize them into the unit ball.

    Sampling is uniform with replacement when the proxy has fewer than n
    points, without replacement otherwise. The sample is centered on its
    centroid and scaled by its max radius; a degenerate single-location proxy
    maps to all zeros. ``seed`` may be an int or a numpy Generator.
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    pts = as_points(points, name="proxy")
    rng = np.random.default_rng(seed)
    replace = pts.shape[0] < n
    idx = rng.choice(pts.shape[0], size=n, replace=replace)
    sample = pts[idx]
    sample = sample - sample.mean(axis=0)
    radius = np.max(np.linalg.norm(sample, axis=1))
    if radius > 0.0:
        sample = sample / radius
    return sample


def forward(params, points):
    """Embed a sampled point set into a unit vector.

    Returns ``(f, cache)``; the cache carries the pre-activations and argmax
    routing needed by :func:`backward`.
    """
    pts = as_points(points, name="sampled points")
    u1 = pts @ params.w1.T + params.b1
    z1 = np.maximum(u1, 0.0)
    u2 = z1 @ params.w2.T + params.b2
    z2 = np.maximum(u2, 0.0)
    arg = np.argmax(z2, axis=0)  # ties resolve to the lowest point index
    pooled = z2[arg, np.arange(z2.shape[1])]
    u3 = params.w3 @ pooled + params.b3
    h = np.maximum(u3, 0.0)
    y = params.w4 @ h + params.b4
    norm = np.linalg.norm(y)
    if norm < 1e-12:
        raise DegenerateEmbeddingError("degenerate embedding: zero-norm output")
    f = y / norm
    cache = {
        "points": pts,
        "u1": u1,
        "z1": z1,
        "u2": u2,
        "arg": arg,
        "pooled": pooled,
        "u3": u3,
        "h": h,
        "f": f,
        "norm": norm,
    }
    return f, cache


def backward(params, cache, dloss_df):
    """Exact gradients of a scalar loss w.r.t. every parameter.

    ``dloss_df`` is the loss gradient w.r.t. the normalized embedding from a
    matching :func:`forward` call.
    """
    g = np.asarray(dloss_df, dtype=np.float64)
    f, norm = cache["f"], cache["norm"]
    if g.shape != f.shape:
        raise ValueError(f"gradient shape {g.shape} does not match embedding {f.shape}")
    dy = (g - np.dot(g, f) * f) / norm
    grads = zeros_like_params(params)
    grads.w4 = np.outer(dy, cache["h"])
    grads.b4 = dy
    dh = params.w4.T @ dy
    du3 = dh * (cache["u3"] > 0.0)
    grads.w3 = np.outer(du3, cache["pooled"])
    grads.b3 = du3
    dpooled = params.w3.T @ du3
    dz2 = np.zeros_like(cache["u2"])
    dz2[cache["arg"], np.arange(dz2.shape[1])] = dpooled
    du2 = dz2 * (cache["u2"] > 0.0)
    grads.w2 = du2.T @ cache["z1"]
    grads.b2 = du2.sum(axis=0)
    dz1 = du2 @ params.w2
    du1 = dz1 * (cache["u1"] > 0.0)
    grads.w1 = du1.T @ cache["points"]
    grads.b1 = du1.sum(axis=0)
    return grads
