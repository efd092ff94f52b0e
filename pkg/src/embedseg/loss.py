"""Training objective and loop.

The proposed per-anchor objective compares the nearest positive against the
nearest negative inside pools drawn from two non-anchor frames:

    term(a) = max(0, min_p ||f(a)-f(p)||^2 - min_n ||f(a)-f(n)||^2 + alpha)

with f the embedding head. Two ablation baselines (standard triplet and
contrastive) share the same distance conventions. Gradients are analytic,
treating the argmin selections as fixed; terms hinged to zero contribute
nothing, including exactly at the boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Video, mask_to_cell_labels
from .embed import (
    EmbedConfig,
    HeadParams,
    augmented_video_features,
    head_backward,
    head_forward_cached,
    head_init,
)

DEFAULT_ALPHA = 0.3
_ANCHOR_BLOCK = 32


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows, (n, m), by direct difference.

    Blocked over rows of a to bound memory; the per-pair reduction order is a
    plain axis sum, so singleton-pool results match _row_sq bit for bit.
    """
    out = np.empty((a.shape[0], b.shape[0]))
    for start in range(0, a.shape[0], _ANCHOR_BLOCK):
        block = a[start : start + _ANCHOR_BLOCK]
        diff = block[:, None, :] - b[None, :, :]
        out[start : start + _ANCHOR_BLOCK] = np.einsum("apd,apd->ap", diff, diff)
    return out


def _row_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a - b
    return np.einsum("nd,nd->n", diff, diff)


@dataclass(frozen=True)
class TripletBatch:
    """Anchors plus a shared candidate pool, partitioned per anchor by label.

    Feature vectors are head inputs, not embeddings; the loss embeds them.
    positive/negative index arrays are ascending, so argmin tie-breaking by
    position equals tie-breaking by pool index.
    """

    anchor_features: np.ndarray  # (n_anchors, input_dim)
    anchor_labels: np.ndarray  # (n_anchors,)
    pool_features: np.ndarray  # (n_pool, input_dim)
    pool_labels: np.ndarray  # (n_pool,)
    positive_indices: tuple[np.ndarray, ...]
    negative_indices: tuple[np.ndarray, ...]

    @property
    def anchor_count(self) -> int:
        return self.anchor_features.shape[0]


def make_batch(
    anchor_features: np.ndarray,
    anchor_labels: np.ndarray,
    pool_features: np.ndarray,
    pool_labels: np.ndarray,
) -> TripletBatch:
    """Partition the pool for each anchor by label agreement."""
    anchor_labels = np.asarray(anchor_labels)
    pool_labels = np.asarray(pool_labels)
    positives = []
    negatives = []
    for label in anchor_labels:
        match = pool_labels == label
        positives.append(np.flatnonzero(match))
        negatives.append(np.flatnonzero(~match))
    return TripletBatch(
        anchor_features=np.asarray(anchor_features, dtype=np.float64),
        anchor_labels=anchor_labels.astype(np.int64),
        pool_features=np.asarray(pool_features, dtype=np.float64),
        pool_labels=pool_labels.astype(np.int64),
        positive_indices=tuple(positives),
        negative_indices=tuple(negatives),
    )


@dataclass(frozen=True)
class AnchorTerm:
    value: float
    positive_index: int  # position within this anchor's positive pool, -1 when skipped
    negative_index: int  # position within this anchor's negative pool
    skipped: bool


@dataclass(frozen=True)
class LossReport:
    total: float
    per_anchor: tuple[AnchorTerm, ...]

    @property
    def skipped_count(self) -> int:
        return sum(1 for t in self.per_anchor if t.skipped)


def _check_batch(batch: TripletBatch, alpha: float) -> None:
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    for i, neg in enumerate(batch.negative_indices):
        if neg.size == 0:
            raise ValueError(f"anchor {i} has an empty negative pool")


def proposed_loss(params: HeadParams, batch: TripletBatch, alpha: float = DEFAULT_ALPHA) -> LossReport:
    _check_batch(batch, alpha)
    anchors, _ = head_forward_cached(params, batch.anchor_features)
    pool, _ = head_forward_cached(params, batch.pool_features)
    if not (np.isfinite(anchors).all() and np.isfinite(pool).all()):
        raise ValueError("non-finite embedding")
    distances = _pairwise_sq(anchors, pool)
    terms = []
    total = 0.0
    for i in range(batch.anchor_count):
        pos = batch.positive_indices[i]
        if pos.size == 0:
            terms.append(AnchorTerm(0.0, -1, -1, True))
            continue
        neg = batch.negative_indices[i]
        d_pos = distances[i, pos]
        d_neg = distances[i, neg]
        p_at = int(np.argmin(d_pos))
        n_at = int(np.argmin(d_neg))
        value = max(0.0, float(d_pos[p_at] - d_neg[n_at] + alpha))
        total += value
        terms.append(AnchorTerm(value, p_at, n_at, False))
    return LossReport(total=total, per_anchor=tuple(terms))


def standard_triplet_loss(
    params: HeadParams,
    triplets: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]],
    alpha: float = DEFAULT_ALPHA,
) -> float:
    """Hinged triplet loss over explicit (anchor, positive, negative) inputs."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if not triplets:
        return 0.0
    a = np.asarray([t[0] for t in triplets], dtype=np.float64)
    p = np.asarray([t[1] for t in triplets], dtype=np.float64)
    n = np.asarray([t[2] for t in triplets], dtype=np.float64)
    fa, _ = head_forward_cached(params, a)
    fp, _ = head_forward_cached(params, p)
    fn, _ = head_forward_cached(params, n)
    margins = _row_sq(fa, fp) - _row_sq(fa, fn) + alpha
    return float(np.maximum(0.0, margins).sum())


def contrastive_loss(
    params: HeadParams,
    pairs: Sequence[tuple[np.ndarray, np.ndarray, int]],
    alpha: float = DEFAULT_ALPHA,
) -> float:
    """Pairwise baseline: y*d^2 + (1-y)*max(alpha-d, 0)^2, d the plain distance."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if not pairs:
        return 0.0
    xi = np.asarray([p[0] for p in pairs], dtype=np.float64)
    xj = np.asarray([p[1] for p in pairs], dtype=np.float64)
    y = np.asarray([p[2] for p in pairs], dtype=np.float64)
    fi, _ = head_forward_cached(params, xi)
    fj, _ = head_forward_cached(params, xj)
    d = np.sqrt(_row_sq(fi, fj))
    contributions = y * d**2 + (1.0 - y) * np.maximum(alpha - d, 0.0) ** 2
    return float(contributions.sum())


def loss_gradient(
    params: HeadParams, batch: TripletBatch, alpha: float = DEFAULT_ALPHA
) -> tuple[dict, LossReport]:
    """Analytic gradient of proposed_loss w.r.t. the head parameters.

    Each active term differentiates with its argmin selections held fixed:
    the anchor embedding receives 2(f(n*) - f(p*)), the selected positive
    2(f(p*) - f(a)), the selected negative 2(f(a) - f(n*)).
    """
    _check_batch(batch, alpha)
    anchors, anchor_cache = head_forward_cached(params, batch.anchor_features)
    pool, pool_cache = head_forward_cached(params, batch.pool_features)
    if not (np.isfinite(anchors).all() and np.isfinite(pool).all()):
        raise ValueError("non-finite embedding")
    distances = _pairwise_sq(anchors, pool)

    g_anchor = np.zeros_like(anchors)
    g_pool = np.zeros_like(pool)
    terms = []
    total = 0.0
    for i in range(batch.anchor_count):
        pos = batch.positive_indices[i]
        if pos.size == 0:
            terms.append(AnchorTerm(0.0, -1, -1, True))
            continue
        neg = batch.negative_indices[i]
        d_pos = distances[i, pos]
        d_neg = distances[i, neg]
        p_rel = int(np.argmin(d_pos))
        n_rel = int(np.argmin(d_neg))
        p_at = int(pos[p_rel])
        n_at = int(neg[n_rel])
        raw = float(distances[i, p_at] - distances[i, n_at] + alpha)
        value = max(0.0, raw)
        total += value
        terms.append(AnchorTerm(value, p_rel, n_rel, False))
        if raw > 0.0:
            g_anchor[i] += 2.0 * (pool[n_at] - pool[p_at])
            g_pool[p_at] += 2.0 * (pool[p_at] - anchors[i])
            g_pool[n_at] += 2.0 * (anchors[i] - pool[n_at])

    grads_a = head_backward(params, anchor_cache, g_anchor)
    grads_p = head_backward(params, pool_cache, g_pool)
    grads = {key: grads_a[key] + grads_p[key] for key in grads_a}
    return grads, LossReport(total=total, per_anchor=tuple(terms))


# ---------------------------------------------------------------------------
# Batch sampling from ground-truth sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PreparedSequence:
    """Augmented features and cell labels, flattened row-major per frame."""

    features: np.ndarray  # (frames, cells, input_dim)
    cell_labels: np.ndarray  # (frames, cells)

    @property
    def frame_count(self) -> int:
        return self.features.shape[0]


def prepare_sequence(video: Video, masks: np.ndarray, config: EmbedConfig) -> PreparedSequence:
    grids = augmented_video_features(video, config)
    frames, rows, cols, dim = grids.shape
    labels = np.stack(
        [mask_to_cell_labels(masks[j], config.stride).reshape(-1) for j in range(frames)]
    )
    return PreparedSequence(features=grids.reshape(frames, rows * cols, dim), cell_labels=labels)


def sample_training_batch(
    prepared: PreparedSequence, anchor_count: int, rng: np.random.Generator
) -> TripletBatch:
    """Three distinct frames; anchors from one, the pool from the other two.

    The anchor frame should contain at least two distinct cell labels; frame
    triples are redrawn a bounded number of times to find one.
    """
    if prepared.frame_count < 3:
        raise ValueError("need at least 3 frames to sample a batch")
    for _ in range(32):
        chosen = rng.choice(prepared.frame_count, size=3, replace=False)
        anchor_frame = int(chosen[0])
        if np.unique(prepared.cell_labels[anchor_frame]).size >= 2:
            break
    pool_frames = sorted(int(f) for f in chosen[1:])

    n_cells = prepared.features.shape[1]
    count = min(anchor_count, n_cells)
    anchor_cells = np.sort(rng.choice(n_cells, size=count, replace=False))
    pool_features = np.concatenate([prepared.features[f] for f in pool_frames])
    pool_labels = np.concatenate([prepared.cell_labels[f] for f in pool_frames])
    return make_batch(
        prepared.features[anchor_frame][anchor_cells],
        prepared.cell_labels[anchor_frame][anchor_cells],
        pool_features,
        pool_labels,
    )


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = DEFAULT_ALPHA
    learning_rate: float = 0.05
    momentum: float = 0.9
    iterations: int = 500
    anchor_count: int = 256
    seed: int = 0
    # cap on the global gradient norm; the hinge makes whole batches inactive,
    # so the first active batch after a quiet stretch can be a cliff
    clip_norm: float = 50.0
    embed: EmbedConfig = field(default_factory=EmbedConfig)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    total_loss: float
    skipped_anchor_count: int


def train(
    sequences: Sequence[tuple[Video, np.ndarray]], config: TrainConfig
) -> tuple[HeadParams, list[IterationRecord]]:
    """SGD with momentum over randomly sampled triplet batches.

    Deterministic given config.seed. Raises if the loss goes non-finite.
    """
    if not sequences:
        raise ValueError("need at least one training sequence")
    rng = np.random.default_rng(config.seed)
    dims = (config.embed.input_dim, config.embed.hidden_dim, config.embed.embed_dim)
    params = head_init(int(rng.integers(2**31)), dims)
    prepared = [prepare_sequence(video, masks, config.embed) for video, masks in sequences]

    velocity = {key: np.zeros_like(getattr(params, key)) for key in ("w1", "b1", "w2", "b2")}
    curve: list[IterationRecord] = []
    for iteration in range(config.iterations):
        seq = prepared[int(rng.integers(len(prepared)))]
        batch = sample_training_batch(seq, config.anchor_count, rng)
        grads, report = loss_gradient(params, batch, config.alpha)
        if not np.isfinite(report.total):
            raise RuntimeError(f"training diverged at iteration {iteration}: non-finite loss")
        if config.clip_norm > 0:
            norm = float(np.sqrt(sum(float((g**2).sum()) for g in grads.values())))
            if norm > config.clip_norm:
                grads = {key: g * (config.clip_norm / norm) for key, g in grads.items()}
        for key in velocity:
            velocity[key] = config.momentum * velocity[key] - config.learning_rate * grads[key]
            setattr(params, key, getattr(params, key) + velocity[key])
        curve.append(IterationRecord(iteration, report.total, report.skipped_count))
    return params, curve


def write_loss_curve(path, curve: Sequence[IterationRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "total_loss", "skipped_anchor_count"])
        for record in curve:
            writer.writerow([record.iteration, f"{record.total_loss:.10g}", record.skipped_anchor_count])


def read_loss_curve(path) -> list[IterationRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                IterationRecord(
                    int(row["iteration"]), float(row["total_loss"]), int(row["skipped_anchor_count"])
                )
            )
    return records


def save_train_config(path, config: TrainConfig) -> None:
    lines = [
        f"alpha={config.alpha}",
        f"learning_rate={config.learning_rate}",
        f"momentum={config.momentum}",
        f"iterations={config.iterations}",
        f"anchor_count={config.anchor_count}",
        f"seed={config.seed}",
        f"stride={config.embed.stride}",
        f"embed_dim={config.embed.embed_dim}",
        f"hidden_dim={config.embed.hidden_dim}",
        f"lambda_space={config.embed.lambda_space}",
        f"lambda_time={config.embed.lambda_time}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_train_config(path) -> TrainConfig:
    values: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    embed = EmbedConfig(
        stride=int(values.get("stride", EmbedConfig.stride)),
        embed_dim=int(values.get("embed_dim", EmbedConfig.embed_dim)),
        hidden_dim=int(values.get("hidden_dim", EmbedConfig.hidden_dim)),
        lambda_space=float(values.get("lambda_space", EmbedConfig.lambda_space)),
        lambda_time=float(values.get("lambda_time", EmbedConfig.lambda_time)),
    )
    return TrainConfig(
        alpha=float(values.get("alpha", DEFAULT_ALPHA)),
        learning_rate=float(values.get("learning_rate", TrainConfig.learning_rate)),
        momentum=float(values.get("momentum", TrainConfig.momentum)),
        iterations=int(values.get("iterations", TrainConfig.iterations)),
        anchor_count=int(values.get("anchor_count", TrainConfig.anchor_count)),
        seed=int(values.get("seed", TrainConfig.seed)),
        embed=embed,
    )
