"""Reference pool, exact kNN classification, online adaptation, upsampling.

Every distance in this module flows through one kernel, `squared_distances`,
shared by the production paths and by test oracles, so accelerated selection
can be compared bit for bit against brute force. The kernel also counts how
many reference-query distance evaluations have been performed, which is how
the incremental-update cost contract is audited.

Neighbor ordering is always ascending (squared distance, pool index); a new
sample is appended at the end of the pool, so on an exact distance tie every
existing sample precedes it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import GridCoord, Video, mask_to_cell_labels
from .embed import EmbedConfig, HeadParams, embed_video

PROVENANCE_USER = 0
PROVENANCE_ADAPTATION = 1
_PROVENANCE_NAMES = {PROVENANCE_USER: "user", PROVENANCE_ADAPTATION: "adaptation"}

DEFAULT_POOL_CAP = 50_000

_POOL_MAGIC = b"ESPL"
_POOL_VERSION = 1

_distance_evaluations = 0


def reset_distance_counter() -> None:
    global _distance_evaluations
    _distance_evaluations = 0


def distance_evaluations() -> int:
    """Total reference-query distance evaluations since the last reset."""
    return _distance_evaluations


def squared_distances(queries: np.ndarray, references: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances, shape (n_queries, n_references).

    Computed by direct difference (no norm expansion) in float64, blocked to
    bound the temporary, so values do not depend on array sizes. Accepts a
    single query vector and then returns shape (n_references,).
    """
    global _distance_evaluations
    single = queries.ndim == 1
    q = np.asarray(queries, dtype=np.float64)
    r = np.asarray(references, dtype=np.float64)
    if single:
        q = q[None, :]
    n, m, d = q.shape[0], r.shape[0], r.shape[1]
    _distance_evaluations += n * m
    out = np.empty((n, m))
    block = max(1, 4_000_000 // max(1, m * d))
    for start in range(0, n, block):
        diff = q[start : start + block, None, :] - r[None, :, :]
        out[start : start + block] = np.einsum("qrd,qrd->qr", diff, diff)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Exact k-nearest selection
# ---------------------------------------------------------------------------


def knn_brute(distances: np.ndarray, k: int) -> np.ndarray:
    """Oracle: indices of the k smallest distances by full stable sort.

    Ascending (distance, index) order; ties resolve to the lower index.
    """
    return np.argsort(distances, kind="stable")[: min(k, distances.shape[0])]


def knn_select(distances: np.ndarray, k: int) -> np.ndarray:
    """Accelerated selection, identical output to knn_brute including ties.

    argpartition finds the k-th distance; every strictly smaller entry plus
    all entries tied with the boundary are then ordered by a stable sort, so
    boundary ties still resolve to the lower index.
    """
    m = distances.shape[0]
    if k >= m:
        return np.argsort(distances, kind="stable")
    part = np.argpartition(distances, k - 1)[:k]
    threshold = distances[part].max()
    candidates = np.flatnonzero(distances <= threshold)
    order = np.argsort(distances[candidates], kind="stable")
    return candidates[order[:k]]


# ---------------------------------------------------------------------------
# Reference pool
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceSample:
    embedding: np.ndarray
    label: int
    origin: GridCoord
    provenance: int = PROVENANCE_USER


class ReferencePool:
    """Append-ordered reference samples; insertion order is the tie-break order."""

    def __init__(self, embed_dim: int):
        self.embed_dim = embed_dim
        self._capacity = 64
        self._embeddings = np.empty((self._capacity, embed_dim))
        self._labels = np.empty(self._capacity, dtype=np.int64)
        self._origins = np.empty((self._capacity, 3), dtype=np.int64)
        self._provenance = np.empty(self._capacity, dtype=np.uint8)
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def embeddings(self) -> np.ndarray:
        return self._embeddings[: self._size]

    @property
    def labels(self) -> np.ndarray:
        return self._labels[: self._size]

    @property
    def provenance(self) -> np.ndarray:
        return self._provenance[: self._size]

    def origin(self, index: int) -> GridCoord:
        frame, row, col = self._origins[index]
        return GridCoord(int(frame), int(row), int(col))

    def sample(self, index: int) -> ReferenceSample:
        if not 0 <= index < self._size:
            raise IndexError("pool index out of range")
        return ReferenceSample(
            embedding=self._embeddings[index].copy(),
            label=int(self._labels[index]),
            origin=self.origin(index),
            provenance=int(self._provenance[index]),
        )

    def _grow(self, needed: int) -> None:
        while self._capacity < needed:
            self._capacity *= 2
        for name in ("_embeddings", "_labels", "_origins", "_provenance"):
            old = getattr(self, name)
            shape = (self._capacity,) + old.shape[1:]
            new = np.empty(shape, dtype=old.dtype)
            new[: self._size] = old[: self._size]
            setattr(self, name, new)

    def add(self, embedding: np.ndarray, label: int, origin: GridCoord, provenance: int = PROVENANCE_USER) -> int:
        """Append one sample; returns its pool index."""
        embedding = np.asarray(embedding, dtype=np.float64)
        if embedding.shape != (self.embed_dim,):
            raise ValueError(f"embedding must have dimension {self.embed_dim}")
        if not np.isfinite(embedding).all():
            raise ValueError("non-finite reference embedding")
        if label < 0:
            raise ValueError("label must be non-negative")
        if self._size == self._capacity:
            self._grow(self._size + 1)
        i = self._size
        self._embeddings[i] = embedding
        self._labels[i] = label
        self._origins[i] = (origin.frame_index, origin.grid_row, origin.grid_col)
        self._provenance[i] = provenance
        self._size += 1
        return i

    def remove_indices(self, indices: np.ndarray) -> None:
        """Compact the pool, dropping the given indices. Invalidates neighbor lists."""
        keep = np.ones(self._size, dtype=bool)
        keep[indices] = False
        kept = int(keep.sum())
        self._embeddings[:kept] = self._embeddings[: self._size][keep]
        self._labels[:kept] = self._labels[: self._size][keep]
        self._origins[:kept] = self._origins[: self._size][keep]
        self._provenance[:kept] = self._provenance[: self._size][keep]
        self._size = kept

    def distinct_labels(self) -> np.ndarray:
        return np.unique(self.labels)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def knn_query(pool: ReferencePool, query: np.ndarray, k: int) -> list[tuple[int, float]]:
    """The min(k, |pool|) nearest references as (pool index, squared distance)."""
    if len(pool) == 0:
        raise ValueError("reference pool is empty")
    if k < 1:
        raise ValueError("k must be at least 1")
    d = squared_distances(np.asarray(query, dtype=np.float64), pool.embeddings)
    idx = knn_select(d, k)
    return [(int(i), float(d[i])) for i in idx]


def _vote(labels: np.ndarray, num_labels: int) -> tuple[int, np.ndarray]:
    counts = np.bincount(labels, minlength=num_labels)
    return int(np.argmax(counts)), counts / labels.shape[0]


def vote_rows(neighbor_labels: np.ndarray, num_labels: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise majority vote; count ties resolve to the smaller label.

    neighbor_labels: (n, m) labels of each row's neighbors. Returns
    (labels (n,) int32, fractions (n, num_labels)).
    """
    n, m = neighbor_labels.shape
    composite = neighbor_labels + np.arange(n)[:, None] * num_labels
    counts = np.bincount(composite.ravel(), minlength=n * num_labels).reshape(n, num_labels)
    return np.argmax(counts, axis=1).astype(np.int32), counts / m


def classify_cell(pool: ReferencePool, query: np.ndarray, k: int) -> tuple[int, dict[int, float]]:
    """Majority vote among the k nearest references; count ties to the smaller label."""
    neighbors = knn_query(pool, query, k)
    idx = np.array([i for i, _ in neighbors])
    num_labels = int(pool.labels.max()) + 1
    label, fractions = _vote(pool.labels[idx], num_labels)
    return label, {
        int(lab): float(frac) for lab, frac in enumerate(fractions) if frac > 0
    }


def classify_grid(
    pool: ReferencePool, embeddings: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Classify every grid cell.

    embeddings: (rows, cols, d). Returns (label grid int32 (rows, cols),
    vote fractions (rows, cols, num_labels)) with num_labels = max pool label + 1.
    """
    if len(pool) == 0:
        raise ValueError("reference pool is empty")
    rows, cols, dim = embeddings.shape
    flat = embeddings.reshape(rows * cols, dim)
    distances = squared_distances(flat, pool.embeddings)
    num_labels = int(pool.labels.max()) + 1
    m = min(k, len(pool))
    selected = np.empty((rows * cols, m), dtype=np.int64)
    for i in range(rows * cols):
        selected[i] = knn_select(distances[i], k)
    labels, fractions = vote_rows(pool.labels[selected], num_labels)
    return labels.reshape(rows, cols), fractions.reshape(rows, cols, num_labels)


# ---------------------------------------------------------------------------
# Neighbor lists and incremental insertion
# ---------------------------------------------------------------------------


@dataclass
class NeighborLists:
    """Per query cell, the current min(k, |pool|) nearest references.

    indices and distances have shape (n_cells, m), every row sorted ascending
    by (distance, pool index).
    """

    k: int
    indices: np.ndarray
    distances: np.ndarray

    @property
    def cell_count(self) -> int:
        return self.indices.shape[0]

    def labels(self, pool: ReferencePool) -> np.ndarray:
        """Majority-vote label per cell, count ties to the smaller label."""
        num_labels = int(pool.labels.max()) + 1
        out, _ = vote_rows(pool.labels[self.indices], num_labels)
        return out


def build_neighbor_lists(pool: ReferencePool, queries: np.ndarray, k: int) -> NeighborLists:
    """From scratch: full distance evaluation plus exact selection per cell."""
    if len(pool) == 0:
        raise ValueError("reference pool is empty")
    distances = squared_distances(queries, pool.embeddings)
    m = min(k, len(pool))
    n = queries.shape[0]
    indices = np.empty((n, m), dtype=np.int64)
    dists = np.empty((n, m))
    for i in range(n):
        sel = knn_select(distances[i], k)
        indices[i] = sel
        dists[i] = distances[i, sel]
    return NeighborLists(k=k, indices=indices, distances=dists)


def add_reference_incremental(
    lists: NeighborLists, pool: ReferencePool, new_index: int, queries: np.ndarray
) -> tuple[NeighborLists, np.ndarray, np.ndarray]:
    """Fold one appended reference into existing neighbor lists.

    Cost: one distance evaluation per query cell, independent of pool size.
    Returns (updated lists, indices of cells whose majority label flipped,
    the new labels of exactly those cells). The updated lists are identical
    to a from-scratch rebuild: the candidate set per cell is its old list
    plus the new sample, which has the highest pool index, so a stable sort
    on distance reproduces the global (distance, index) order.
    """
    d_new = squared_distances(queries, pool.embeddings[new_index][None, :])[:, 0]
    cand_d = np.concatenate([lists.distances, d_new[:, None]], axis=1)
    cand_i = np.concatenate(
        [lists.indices, np.full((lists.cell_count, 1), new_index, dtype=np.int64)], axis=1
    )
    order = np.argsort(cand_d, axis=1, kind="stable")
    m = min(lists.k, len(pool))
    new_indices = np.take_along_axis(cand_i, order, axis=1)[:, :m]
    new_distances = np.take_along_axis(cand_d, order, axis=1)[:, :m]

    num_labels = int(pool.labels.max()) + 1
    if new_indices.shape[1] != lists.indices.shape[1]:
        touched = np.arange(lists.cell_count)
    else:
        touched = np.flatnonzero((new_indices != lists.indices).any(axis=1))
    updated = NeighborLists(k=lists.k, indices=new_indices, distances=new_distances)
    if touched.size == 0:
        return updated, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int32)
    before, _ = vote_rows(pool.labels[lists.indices[touched]], num_labels)
    after, _ = vote_rows(pool.labels[new_indices[touched]], num_labels)
    flipped = before != after
    return updated, touched[flipped], after[flipped]


# ---------------------------------------------------------------------------
# Online adaptation
# ---------------------------------------------------------------------------


def online_adapt(
    pool: ReferencePool,
    frame_embeddings: np.ndarray,
    frame_index: int,
    k: int = 5,
    cap: int = DEFAULT_POOL_CAP,
    rng: np.random.Generator | None = None,
) -> list[ReferenceSample]:
    """Add cells whose k nearest references vote unanimously.

    Classification uses the pool state at frame start: samples added here do
    not act as neighbors for later cells of the same frame. If the pool would
    exceed cap, adaptation-provenance samples are evicted uniformly at
    random; user samples are never evicted.
    """
    if len(pool) == 0:
        raise ValueError("reference pool is empty")
    rows, cols, dim = frame_embeddings.shape
    flat = frame_embeddings.reshape(rows * cols, dim)
    distances = squared_distances(flat, pool.embeddings)
    pool_labels_snapshot = pool.labels.copy()
    added: list[ReferenceSample] = []
    for i in range(rows * cols):
        idx = knn_select(distances[i], k)
        neighbor_labels = pool_labels_snapshot[idx]
        if (neighbor_labels == neighbor_labels[0]).all():  # unanimous
            sample = ReferenceSample(
                embedding=flat[i].copy(),
                label=int(neighbor_labels[0]),
                origin=GridCoord(frame_index, i // cols, i % cols),
                provenance=PROVENANCE_ADAPTATION,
            )
            pool.add(sample.embedding, sample.label, sample.origin, sample.provenance)
            added.append(sample)
    excess = len(pool) - cap
    if excess > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        adaptation_idx = np.flatnonzero(pool.provenance == PROVENANCE_ADAPTATION)
        evict = rng.choice(adaptation_idx, size=min(excess, adaptation_idx.size), replace=False)
        pool.remove_indices(evict)
    return added


# ---------------------------------------------------------------------------
# Upsampling to full resolution
# ---------------------------------------------------------------------------


def _axis_interp(length: int, cells: int, stride: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # cell g covers pixels [g*stride, (g+1)*stride); its center is g*stride + (stride-1)/2
    positions = (np.arange(length) - (stride - 1) / 2.0) / stride
    positions = np.clip(positions, 0.0, cells - 1.0)
    low = np.floor(positions).astype(np.int64)
    low = np.minimum(low, cells - 1)
    high = np.minimum(low + 1, cells - 1)
    weight = positions - low
    return low, high, weight


def upsample_labels(
    label_grid: np.ndarray, fractions: np.ndarray, stride: int, height: int, width: int
) -> np.ndarray:
    """Bilinear interpolation of per-label vote fractions, then argmax.

    Fraction ties at a pixel resolve to the smaller label id. stride 1 is the
    identity on the label grid.
    """
    rows, cols, _ = fractions.shape
    r_low, r_high, r_w = _axis_interp(height, rows, stride)
    c_low, c_high, c_w = _axis_interp(width, cols, stride)
    top = fractions[r_low]
    bottom = fractions[r_high]
    by_row = top * (1.0 - r_w)[:, None, None] + bottom * r_w[:, None, None]
    left = by_row[:, c_low]
    right = by_row[:, c_high]
    full = left * (1.0 - c_w)[None, :, None] + right * c_w[None, :, None]
    return np.argmax(full, axis=-1).astype(np.int32)


def one_hot_fractions(label_grid: np.ndarray, num_labels: int | None = None) -> np.ndarray:
    if num_labels is None:
        num_labels = int(label_grid.max()) + 1
    rows, cols = label_grid.shape
    out = np.zeros((rows, cols, num_labels))
    out[np.arange(rows)[:, None], np.arange(cols)[None, :], label_grid] = 1.0
    return out


# ---------------------------------------------------------------------------
# Semi-supervised segmentation of a whole video
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentConfig:
    k: int = 5
    adapt: bool = True
    cap: int = DEFAULT_POOL_CAP
    seed: int = 0
    embed: EmbedConfig = field(default_factory=EmbedConfig)


def pool_from_mask(
    embeddings_frame: np.ndarray, mask: np.ndarray, stride: int, frame_index: int = 0
) -> ReferencePool:
    """One reference per grid cell, labeled by majority pixel label in the cell."""
    rows, cols, dim = embeddings_frame.shape
    cell_labels = mask_to_cell_labels(mask, stride)
    if not (cell_labels > 0).any():
        raise ValueError("no foreground reference in the annotated frame")
    pool = ReferencePool(dim)
    for r in range(rows):
        for c in range(cols):
            pool.add(
                embeddings_frame[r, c],
                int(cell_labels[r, c]),
                GridCoord(frame_index, r, c),
                PROVENANCE_USER,
            )
    return pool


def segment_video_semisupervised(
    video: Video, first_frame_mask: np.ndarray, params: HeadParams, config: SegmentConfig
) -> np.ndarray:
    """Segment frames 1..N-1 from the frame-0 mask; returns (frames, H, W) int32.

    The frame-0 output is its own grid labeling upsampled; later frames are
    classified against the pool, which grows by online adaptation when enabled.
    """
    embeddings = embed_video(video, params, config.embed)
    stride = config.embed.stride
    cell_labels0 = mask_to_cell_labels(first_frame_mask, stride)
    pool = pool_from_mask(embeddings[0], first_frame_mask, stride, frame_index=0)
    rng = np.random.default_rng(config.seed)

    num_labels = int(pool.labels.max()) + 1
    out = np.empty((video.frame_count, video.height, video.width), dtype=np.int32)
    out[0] = upsample_labels(
        cell_labels0, one_hot_fractions(cell_labels0, num_labels), stride, video.height, video.width
    )
    for j in range(1, video.frame_count):
        labels, fractions = classify_grid(pool, embeddings[j], config.k)
        out[j] = upsample_labels(labels, fractions, stride, video.height, video.width)
        if config.adapt:
            online_adapt(pool, embeddings[j], j, k=config.k, cap=config.cap, rng=rng)
    return out


# ---------------------------------------------------------------------------
# Pool serialization
# ---------------------------------------------------------------------------


def save_pool(path, pool: ReferencePool) -> None:
    with open(path, "wb") as fh:
        fh.write(_POOL_MAGIC)
        fh.write(struct.pack("<III", _POOL_VERSION, pool.embed_dim, len(pool)))
        for i in range(len(pool)):
            fh.write(np.ascontiguousarray(pool.embeddings[i], dtype=np.float64).tobytes())
            origin = pool.origin(i)
            fh.write(
                struct.pack(
                    "<iiiiB",
                    int(pool.labels[i]),
                    origin.frame_index,
                    origin.grid_row,
                    origin.grid_col,
                    int(pool.provenance[i]),
                )
            )


def load_pool(path) -> ReferencePool:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _POOL_MAGIC:
            raise ValueError(f"not a reference pool file: bad magic {magic!r}")
        version, dim, count = struct.unpack("<III", fh.read(12))
        if version != _POOL_VERSION:
            raise ValueError(f"unsupported pool file version {version}")
        pool = ReferencePool(dim)
        for _ in range(count):
            embedding = np.frombuffer(fh.read(dim * 8), dtype="<f8", count=dim)
            label, frame, row, col, prov = struct.unpack("<iiiiB", fh.read(17))
            pool.add(embedding, label, GridCoord(frame, row, col), prov)
    return pool
