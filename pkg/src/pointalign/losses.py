"""Cross-modal contrastive objectives with exact input gradients.

Both losses anchor on a frozen modality (text or image) and contrast against
the point embeddings of the mini-batch:

* text->point: the denominator keeps the positive pair plus only those batch
  members whose caption differs from the anchor's, so same-class samples are
  never treated as negatives;
* image->point: every other batch member is a negative, same class or not.

Gradients are returned w.r.t. the point embeddings only; the text and image
embeddings are fixed features.
"""

import warnings

import numpy as np


def _masked_infonce(anchors, point_vecs, include):
    """Shared core: softmax over the entries of ``include`` per row.

    ``include`` must contain the diagonal (the positive pair). Returns the
    mean loss and its gradient w.r.t. ``point_vecs``.
    """
    n = anchors.shape[0]
    s = anchors @ point_vecs.T  # scaled similarities
    masked = np.where(include, s, -np.inf)
    m = masked.max(axis=1)
    e = np.exp(masked - m[:, None])  # excluded entries become exp(-inf) = 0
    denom = e.sum(axis=1)
    diag = np.arange(n)
    losses = -s[diag, diag] + m + np.log(denom)
    w = e / denom[:, None]
    w[diag, diag] -= 1.0
    grad = w.T @ anchors / n
    return float(losses.mean()), grad


def text_point_loss(text_vecs, point_vecs, caption_ids, temperature):
    """Semantic-level alignment loss and its gradient w.r.t. the point vectors.

    Emits a warning (loss is identically 0) when every sample in the batch
    shares one caption, since no valid negatives remain.
    """
    t = np.asarray(text_vecs, dtype=np.float64)
    p = np.asarray(point_vecs, dtype=np.float64)
    ids = np.asarray(caption_ids)
    n = t.shape[0]
    if n < 2:
        raise ValueError(f"batch size must be >= 2, got {n}")
    if p.shape != t.shape or ids.shape[0] != n:
        raise ValueError("text, point and caption arrays must align")
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    include = ids[None, :] != ids[:, None]
    if not include.any():
        warnings.warn(
            "all batch captions identical: text-point loss has no negatives and is 0",
            RuntimeWarning,
            stacklevel=2,
        )
    np.fill_diagonal(include, True)
    # anchors carry the 1/temperature factor, so the returned gradient does too
    return _masked_infonce(t / temperature, p, include)


def image_point_loss(image_vecs, point_vecs, temperature):
    """Instance-level alignment loss; negatives are all other batch members."""
    im = np.asarray(image_vecs, dtype=np.float64)
    p = np.asarray(point_vecs, dtype=np.float64)
    n = im.shape[0]
    if n < 2:
        raise ValueError(f"batch size must be >= 2, got {n}")
    if p.shape != im.shape:
        raise ValueError("image and point arrays must align")
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    include = np.ones((n, n), dtype=bool)
    return _masked_infonce(im / temperature, p, include)


def combined_loss(
    text_vecs,
    image_vecs,
    point_vecs,
    caption_ids,
    temperature,
    lambda_text=0.5,
    lambda_image=0.5,
):
    """Weighted sum of the two alignment losses.

    Returns ``(loss, grad, (text_loss, image_loss))`` with the gradient taken
    w.r.t. the point embeddings.
    """
    lt, gt = text_point_loss(text_vecs, point_vecs, caption_ids, temperature)
    li, gi = image_point_loss(image_vecs, point_vecs, temperature)
    loss = lambda_text * lt + lambda_image * li
    grad = lambda_text * gt + lambda_image * gi
    return loss, grad, (lt, li)
