"""Zero-shot recognition: cosine logits against prompt-templated class names.

A class bank holds one unit text embedding per class name; an instance is
classified by the softmax of the raw inner products between its (normalized)
embedding and the bank rows. Predictions from several representations can be
merged by summing their probability vectors.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .validation import check_unit_rows

DEFAULT_TEMPLATE = "point cloud of a {}."


def softmax(x):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class ClassBank:
    """Ordered class names with their (K, C) unit text embedding matrix."""

    names: tuple
    vectors: np.ndarray

    def __post_init__(self):
        if len(self.names) < 1:
            raise ValueError("class bank needs at least one class")
        lowered = [n.strip().lower() for n in self.names]
        if len(set(lowered)) != len(lowered):
            dup = next(n for n in lowered if lowered.count(n) > 1)
            raise ValueError(f"duplicate class {dup!r}")
        vec = np.asarray(self.vectors, dtype=np.float64)
        if vec.shape[0] != len(self.names):
            raise ValueError("one embedding row per class name required")
        check_unit_rows(vec, "class bank")
        vec.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "vectors", vec)

    @property
    def size(self):
        return len(self.names)


def build_class_bank(names, embeddings, template=DEFAULT_TEMPLATE):
    """Embed ``template.format(name)`` per class and L2-normalize the rows."""
    if template.count("{}") != 1:
        raise ValueError(f"template must contain exactly one '{{}}' placeholder: {template!r}")
    rows = []
    for name in names:
        vec = np.asarray(embeddings.embed_text(template.format(name)), dtype=np.float64)
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise ValueError(f"embedding for class {name!r} has zero norm")
        rows.append(vec / norm)
    return ClassBank(names=tuple(names), vectors=np.stack(rows))


def classify_proba(embedding, bank):
    """Softmax class probabilities for one instance embedding.

    The embedding is re-normalized on entry, so the argmax is invariant to
    positive rescaling of the input.
    """
    vec = np.asarray(embedding, dtype=np.float64).reshape(-1)
    if vec.shape[0] != bank.vectors.shape[1]:
        raise ValueError(
            f"embedding dimension {vec.shape[0]} does not match bank {bank.vectors.shape[1]}"
        )
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ValueError("cannot classify a zero embedding")
    return softmax(bank.vectors @ (vec / norm))


def top_k(probs, k=5):
    """Class indices by descending probability; ties go to the lower index."""
    probs = np.asarray(probs)
    order = np.argsort(-probs, kind="stable")
    return order[: min(k, probs.shape[0])]


def ensemble_proba(prob_rows):
    """Sum per-representation probability vectors and re-normalize."""
    rows = [np.asarray(r, dtype=np.float64) for r in prob_rows]
    if not rows:
        raise ValueError("ensemble needs at least one input")
    k = rows[0].shape[0]
    for r in rows[1:]:
        if r.shape[0] != k:
            raise ValueError(f"ensemble inputs disagree on class count: {r.shape[0]} vs {k}")
    total = np.sum(rows, axis=0)
    return total / total.sum()


class ZeroShotClassifier(ClassifierMixin, BaseEstimator):
    """Open-vocabulary classifier over raw point clouds.

    Composes a fitted :class:`~pointalign.training.ContrastivePointEncoder`
    (or anything with ``transform``) with a class bank. There is nothing to
    fit: the vocabulary is supplied, not learned.
    """

    def __init__(self, encoder=None, bank=None):
        self.encoder = encoder
        self.bank = bank

    def fit(self, X=None, y=None):
        if self.encoder is None or self.bank is None:
            raise ValueError("encoder and bank are both required")
        self.classes_ = np.arange(self.bank.size)
        return self

    def predict_proba(self, X):
        self.fit()
        feats = self.encoder.transform(X)
        return np.stack([classify_proba(f, self.bank) for f in feats])

    def predict(self, X):
        proba = self.predict_proba(X)
        return np.array([top_k(row, 1)[0] for row in proba])
