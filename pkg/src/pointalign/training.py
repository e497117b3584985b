"""Optimization loop: balanced batches, combined contrastive loss, AdamW with
linear warmup and cosine decay.

The loop owns the single mutable copy of the encoder parameters; everything
it consumes (records, text bank, image embeddings) is frozen data, so runs
are bit-reproducible per seed under single-worker execution.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import io
from .collect import balanced_epoch_length, balanced_indices
from .encoder import backward, forward, init_params, sample_points, zeros_like_params
from .losses import combined_loss
from .validation import check_unit_rows, unit_rows


class NonFiniteLossError(ArithmeticError):
    """Training aborted because the loss became NaN or infinite."""

    def __init__(self, step):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step


def learning_rate_at(step, base_lr, warmup_iters, total_steps):
    """Linear warmup to ``base_lr`` then cosine decay to 0 at ``total_steps``."""
    if warmup_iters > 0 and step < warmup_iters:
        return base_lr * step / warmup_iters
    if total_steps <= warmup_iters:
        return base_lr
    progress = (step - warmup_iters) / (total_steps - warmup_iters)
    progress = min(max(progress, 0.0), 1.0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamState:
    m: object
    v: object
    t: int = 0


def adamw_update(params, grads, state, lr, weight_decay, beta1, beta2, eps):
    """One decoupled-weight-decay adaptive-moment step, in place on params."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for (name, theta), (_, g) in zip(params.layers(), grads.layers()):
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        step_dir = (m / bc1) / (np.sqrt(v / bc2) + eps) + weight_decay * theta
        theta -= lr * step_dir


@dataclass
class TrainingReport:
    """Per-step trace plus per-epoch means and the checkpoint digest."""

    steps: list = field(default_factory=list)  # (step, lr, loss) tuples
    epoch_losses: list = field(default_factory=list)
    steps_per_epoch: int = 0
    total_steps: int = 0
    checkpoint_digest: str = ""

    def to_lines(self):
        lines = ["step\tlr\tloss"]
        for step, lr, loss in self.steps:
            lines.append(f"{step}\t{lr:.12g}\t{loss:.12g}")
        return lines


class ContrastivePointEncoder(TransformerMixin, BaseEstimator):
    """Point encoder fit by cross-modal contrastive alignment.

    ``fit`` consumes triplet records plus a per-caption text bank and learns
    the encoder weights; ``transform`` maps raw point clouds to unit
    embeddings in the shared space.

    Parameters mirror the training configuration: ``lambda_text`` /
    ``lambda_image`` weight the two alignment terms, ``temperature`` scales
    the contrastive softmax, and ``max_steps`` (when set) caps the step count
    derived from ``epochs``.
    """

    def __init__(
        self,
        embed_dim=64,
        hidden1=64,
        hidden2=128,
        hidden3=128,
        n_points=2048,
        batch_size=8,
        temperature=0.07,
        lambda_text=0.5,
        lambda_image=0.5,
        learning_rate=0.006,
        weight_decay=0.03,
        beta1=0.9,
        beta2=0.999,
        adam_eps=1e-8,
        warmup_iters=1000,
        epochs=100,
        max_steps=None,
        repeat_threshold=0.01,
        seed=0,
    ):
        self.embed_dim = embed_dim
        self.hidden1 = hidden1
        self.hidden2 = hidden2
        self.hidden3 = hidden3
        self.n_points = n_points
        self.batch_size = batch_size
        self.temperature = temperature
        self.lambda_text = lambda_text
        self.lambda_image = lambda_image
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.warmup_iters = warmup_iters
        self.epochs = epochs
        self.max_steps = max_steps
        self.repeat_threshold = repeat_threshold
        self.seed = seed

    def _validate_config(self):
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.lambda_text < 0.0 or self.lambda_image < 0.0:
            raise ValueError("loss weights must be non-negative")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def fit(self, X, y=None, text_bank=None, init=None):
        """Fit on a list of triplet records.

        ``text_bank`` is the (V, C) array of unit text embeddings indexed by
        caption id (prompt-templated exactly as at inference time). ``init``
        optionally resumes from existing encoder parameters.
        """
        self._validate_config()
        records = list(X)
        if not records:
            raise ValueError("empty dataset")
        if text_bank is None:
            raise ValueError("text_bank is required")
        bank = np.asarray(text_bank, dtype=np.float64)
        if bank.ndim != 2 or bank.shape[1] != self.embed_dim:
            raise ValueError(
                f"text_bank must have shape (V, {self.embed_dim}), got {bank.shape}"
            )
        check_unit_rows(bank, "text_bank")
        caption_ids = np.array([r.caption_index for r in records], dtype=np.int64)
        if caption_ids.max() >= bank.shape[0]:
            raise ValueError("record caption index outside the text bank")
        for r in records:
            if r.image_embedding.shape[0] != self.embed_dim:
                raise ValueError(
                    f"record {r.instance_id} embedding dimension "
                    f"{r.image_embedding.shape[0]} != {self.embed_dim}"
                )
        image_bank = unit_rows(np.stack([r.image_embedding for r in records]).astype(np.float64))

        params = init.copy() if init is not None else init_params(
            self.hidden1, self.hidden2, self.hidden3, self.embed_dim, seed=[self.seed, 0]
        )
        sampler = balanced_indices(caption_ids, self.repeat_threshold, seed=[self.seed, 1])
        point_rng = np.random.default_rng([self.seed, 2])
        steps_per_epoch = max(1, balanced_epoch_length(caption_ids, self.repeat_threshold) // self.batch_size)
        total_steps = self.epochs * steps_per_epoch
        if self.max_steps is not None:
            total_steps = min(total_steps, int(self.max_steps))
        state = AdamState(m=zeros_like_params(params), v=zeros_like_params(params))
        report = TrainingReport(steps_per_epoch=steps_per_epoch, total_steps=total_steps)

        for step in range(total_steps):
            batch = [next(sampler) for _ in range(self.batch_size)]
            sampled = [
                sample_points(records[i].points, self.n_points, point_rng) for i in batch
            ]
            caches = []
            point_vecs = np.empty((self.batch_size, self.embed_dim))
            for row, pts in enumerate(sampled):
                f, cache = forward(params, pts)
                point_vecs[row] = f
                caches.append(cache)
            loss, grad_points, _ = combined_loss(
                bank[caption_ids[batch]],
                image_bank[batch],
                point_vecs,
                caption_ids[batch],
                self.temperature,
                self.lambda_text,
                self.lambda_image,
            )
            if not math.isfinite(loss):
                raise NonFiniteLossError(step)
            grads = zeros_like_params(params)
            for row, cache in enumerate(caches):
                g = backward(params, cache, grad_points[row])
                for (name, total), (_, part) in zip(grads.layers(), g.layers()):
                    total += part
            lr = learning_rate_at(step, self.learning_rate, self.warmup_iters, total_steps)
            adamw_update(
                params, grads, state, lr, self.weight_decay, self.beta1, self.beta2, self.adam_eps
            )
            report.steps.append((step, lr, loss))

        for start in range(0, len(report.steps), steps_per_epoch):
            chunk = report.steps[start : start + steps_per_epoch]
            report.epoch_losses.append(sum(s[2] for s in chunk) / len(chunk))
        self.params_ = params
        report.checkpoint_digest = hashlib.sha256(io.encoder_bytes(params)).hexdigest()
        self.report_ = report
        return self

    def transform(self, X):
        """Embed raw point clouds into unit vectors in the shared space."""
        if not hasattr(self, "params_"):
            raise NotFittedError("ContrastivePointEncoder is not fitted")
        return encode_clouds(self.params_, X, self.n_points, self.seed)


def encode_clouds(params, clouds, n_points, seed=0):
    """Sample and embed each cloud; deterministic per seed and position."""
    out = np.empty((len(clouds), params.embed_dim))
    for i, cloud in enumerate(clouds):
        pts = sample_points(cloud, n_points, np.random.default_rng([seed, 3, i]))
        out[i], _ = forward(params, pts)
    return out


def train(
    triplet_path,
    vocabulary,
    embeddings,
    checkpoint_path,
    template=None,
    report_path=None,
    resume_from=None,
    **encoder_params,
):
    """File-level training entry point; returns the TrainingReport.

    Builds the per-caption text bank with the same prompt template used at
    inference, fits the encoder on the triplet file and saves the checkpoint.
    """
    from .zero_shot import DEFAULT_TEMPLATE, build_class_bank

    dim, records = io.read_triplets(triplet_path)
    if not records:
        raise ValueError(f"triplet file {triplet_path} holds no records")
    bank = build_class_bank(
        vocabulary, embeddings, DEFAULT_TEMPLATE if template is None else template
    )
    if bank.vectors.shape[1] != dim:
        raise ValueError(
            f"embedding dimension mismatch: triplets carry {dim}, provider gives "
            f"{bank.vectors.shape[1]}"
        )
    est = ContrastivePointEncoder(embed_dim=dim, **encoder_params)
    init = io.load_encoder(resume_from) if resume_from else None
    est.fit(records, text_bank=bank.vectors, init=init)
    io.save_encoder(checkpoint_path, est.params_)
    if report_path is not None:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(est.report_.to_lines()) + "\n")
    return est.report_
