"""Embedding providers: frozen text/image features consumed as data.

The pretrained encoders that produce these features are external to this
package; training and zero-shot classification only ever see fixed vectors.
Two providers are supplied: one backed by a precomputed embedding file and a
seeded synthetic one that assigns each vocabulary caption a fixed orthonormal
anchor direction (used for desk-scale experiments and tests).
"""

import hashlib

import numpy as np


class ProviderMissError(KeyError):
    """Raised when a provider has no embedding for a requested key."""

    def __init__(self, key):
        super().__init__(key)
        self.key = key

    def __str__(self):
        return f"no embedding available for key {self.key!r}"


class FileEmbeddingProvider:
    """Serves unit-normalized vectors from a precomputed embedding file."""

    def __init__(self, path):
        from .io import read_embeddings

        self.dim, self._table = read_embeddings(path)

    def _lookup(self, key):
        try:
            vec = self._table[key]
        except KeyError:
            raise ProviderMissError(key) from None
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise ValueError(f"stored embedding for {key!r} has zero norm")
        return (vec / norm).astype(np.float64)

    def embed_text(self, text):
        return self._lookup(text)

    def embed_image(self, crop_id):
        return self._lookup(crop_id)


def _stable_seed(*parts):
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class SyntheticEmbeddingProvider:
    """Deterministic stand-in provider with one anchor direction per caption.

    Anchors are rows of a seeded random orthogonal matrix, so distinct
    captions get exactly orthonormal embeddings (requires dim >= vocabulary
    size). Text and crop keys are resolved to a caption by longest-substring
    match, which handles prompt templates and crop ids that embed the caption.
    ``image_jitter`` optionally perturbs crop embeddings deterministically
    per key before re-normalization.
    """

    def __init__(self, captions, dim, seed=0, image_jitter=0.0):
        captions = list(captions)
        if not captions:
            raise ValueError("captions must be non-empty")
        if dim < len(captions):
            raise ValueError(
                f"dim ({dim}) must be >= vocabulary size ({len(captions)}) for orthogonal anchors"
            )
        self.captions = captions
        self.dim = int(dim)
        self.image_jitter = float(image_jitter)
        rng = np.random.default_rng([_stable_seed("anchors", seed) % (2**63), 0])
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        self._anchors = q[:, : len(captions)].T.copy()
        self._seed = seed

    def anchor(self, caption_index):
        return self._anchors[caption_index].copy()

    def _match(self, key):
        best = None
        for idx, cap in enumerate(self.captions):
            if cap in key and (best is None or len(cap) > len(self.captions[best])):
                best = idx
        if best is None:
            raise ProviderMissError(key)
        return best

    def embed_text(self, text):
        return self.anchor(self._match(text))

    def embed_image(self, crop_id):
        vec = self.anchor(self._match(crop_id))
        if self.image_jitter > 0.0:
            rng = np.random.default_rng(_stable_seed("jitter", self._seed, crop_id) % (2**63))
            vec = vec + self.image_jitter * rng.standard_normal(self.dim)
            vec = vec / np.linalg.norm(vec)
        return vec

    def export_table(self, text_keys=(), image_keys=()):
        """Materialize embeddings for the given keys (for writing EMB files)."""
        table = {}
        for key in text_keys:
            table[key] = self.embed_text(key).astype(np.float32)
        for key in image_keys:
            table[key] = self.embed_image(key).astype(np.float32)
        return table
