"""Interactive segmentation engine and the simulated-user protocol.

A session computes embeddings exactly once at start. Every click afterwards
appends one reference sample and folds it into per-frame neighbor lists at a
cost of one distance evaluation per grid cell, independent of how many
references exist. Masks are derived from the neighbor lists, never from a
fresh classification, and are bit-equal to one by construction.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Annotation, GridCoord, Video, full_to_grid
from .embed import EmbedConfig, HeadParams, embed_video
from .metrics import jaccard
from .retrieval import (
    NeighborLists,
    ReferencePool,
    add_reference_incremental,
    build_neighbor_lists,
    upsample_labels,
    vote_rows,
)

INSUFFICIENT_REFERENCES = "insufficient references"


@dataclass(frozen=True)
class SessionConfig:
    k: int = 1
    embed: EmbedConfig = field(default_factory=EmbedConfig)


@dataclass(frozen=True)
class ClickCurvePoint:
    clicks_per_frame: float
    mean_j: float


class InteractiveSession:
    """Mutable click-driven state over immutable precomputed embeddings."""

    def __init__(
        self,
        video: Video,
        params: HeadParams,
        config: SessionConfig | None = None,
        num_objects: int | None = None,
    ):
        self.video = video
        self.config = config or SessionConfig()
        self.num_objects = num_objects
        self._embeddings = embed_video(video, params, self.config.embed)
        self._embeddings.setflags(write=False)
        frames, rows, cols, dim = self._embeddings.shape
        self.grid_rows = rows
        self.grid_cols = cols
        self._flat = self._embeddings.reshape(frames, rows * cols, dim)
        self.forward_pass_count = 1
        self._lock = threading.Lock()
        self._reset_annotations()

    def _reset_annotations(self) -> None:
        self.pool = ReferencePool(self._embeddings.shape[-1])
        self._lists: list[NeighborLists] | None = None
        self._cell_labels: np.ndarray | None = None  # (frames, cells) int32
        self.click_log: list[Annotation] = []
        self._mask_cache: dict[int, np.ndarray] = {}

    def reset(self) -> None:
        """Drop all annotations; embeddings are kept (no new forward pass)."""
        with self._lock:
            self._reset_annotations()

    # -- read side ----------------------------------------------------------

    @property
    def masks_ready(self) -> bool:
        return len(self.pool) > 0 and self.pool.distinct_labels().size >= 2

    def embedding_hash(self) -> str:
        return hashlib.sha256(self._embeddings.tobytes()).hexdigest()

    def cell_labels(self, frame_index: int) -> np.ndarray:
        if self._cell_labels is None:
            raise RuntimeError(INSUFFICIENT_REFERENCES)
        return self._cell_labels[frame_index].reshape(self.grid_rows, self.grid_cols)

    def _fractions(self, frame_index: int) -> np.ndarray:
        """Vote fractions per cell from the current neighbor lists."""
        lists = self._lists[frame_index]
        num_labels = int(self.pool.labels.max()) + 1
        _, fractions = vote_rows(self.pool.labels[lists.indices], num_labels)
        return fractions.reshape(self.grid_rows, self.grid_cols, num_labels)

    def mask(self, frame_index: int) -> np.ndarray:
        """Full-resolution label mask for one frame."""
        with self._lock:
            if not self.masks_ready:
                raise RuntimeError(INSUFFICIENT_REFERENCES)
            cached = self._mask_cache.get(frame_index)
            if cached is not None:
                return cached
            labels = self.cell_labels(frame_index)
            mask = upsample_labels(
                labels,
                self._fractions(frame_index),
                self.config.embed.stride,
                self.video.height,
                self.video.width,
            )
            self._mask_cache[frame_index] = mask
            return mask

    def masks(self) -> np.ndarray:
        return np.stack([self.mask(j) for j in range(self.video.frame_count)])

    # -- write side ---------------------------------------------------------

    def add_click(self, annotation: Annotation) -> int:
        """Ingest one annotation; returns the number of cells whose label flipped.

        Work: one distance evaluation per grid cell across all frames (the new
        reference against every query), never proportional to pool size.
        """
        with self._lock:
            self._validate(annotation)
            row, col = full_to_grid(
                annotation.pixel_row,
                annotation.pixel_col,
                self.config.embed.stride,
                self.video.height,
                self.video.width,
            )
            embedding = self._embeddings[annotation.frame_index, row, col]
            new_index = self.pool.add(
                embedding, annotation.label, GridCoord(annotation.frame_index, row, col)
            )
            self.click_log.append(annotation)
            self._mask_cache.clear()

            if self._lists is None:
                self._lists = [
                    build_neighbor_lists(self.pool, self._flat[j], self.config.k)
                    for j in range(self.video.frame_count)
                ]
                self._cell_labels = np.stack(
                    [lists.labels(self.pool) for lists in self._lists]
                )
                return 0
            flipped = 0
            for j in range(self.video.frame_count):
                updated, changed, new_labels = add_reference_incremental(
                    self._lists[j], self.pool, new_index, self._flat[j]
                )
                self._lists[j] = updated
                if changed.size:
                    self._cell_labels[j, changed] = new_labels
                    flipped += changed.size
            return flipped

    def _validate(self, annotation: Annotation) -> None:
        if not 0 <= annotation.frame_index < self.video.frame_count:
            raise ValueError("click frame out of bounds")
        if not (
            0 <= annotation.pixel_row < self.video.height
            and 0 <= annotation.pixel_col < self.video.width
        ):
            raise ValueError("click position out of bounds")
        if self.num_objects is not None and annotation.label > self.num_objects:
            raise ValueError(
                f"label {annotation.label} exceeds object count {self.num_objects}"
            )


def scribble_to_annotations(
    frame_index: int,
    points: Sequence[tuple[int, int]],
    label: int,
    stride: int,
) -> list[Annotation]:
    """Densify a stroke polyline into one annotation per traversed grid cell."""
    annotations = []
    seen = set()
    segments = list(zip(points, points[1:])) or [(points[0], points[0])]
    for (r0, c0), (r1, c1) in segments:
        steps = int(max(abs(r1 - r0), abs(c1 - c0))) + 1
        for t in np.linspace(0.0, 1.0, steps):
            r = int(round(r0 + t * (r1 - r0)))
            c = int(round(c0 + t * (c1 - c0)))
            cell = (r // stride, c // stride)
            if cell not in seen:
                seen.add(cell)
                annotations.append(Annotation(frame_index, r, c, label, kind="scribble-point"))
    return annotations


# ---------------------------------------------------------------------------
# Simulated user
# ---------------------------------------------------------------------------


def _predicted_masks(session: InteractiveSession) -> np.ndarray:
    """Current masks, or all-background before enough labels exist."""
    if session.masks_ready:
        return session.masks()
    video = session.video
    return np.zeros((video.frame_count, video.height, video.width), dtype=np.int32)


def _mean_j(session: InteractiveSession, gt_masks: np.ndarray, num_objects: int) -> float:
    """Frame-averaged J of the current masks (J only; F is not curve input)."""
    preds = _predicted_masks(session)
    frame_scores = []
    for pred, gt in zip(preds, gt_masks):
        present = [k for k in range(1, num_objects + 1) if (gt == k).any()]
        ids = present if present else list(range(1, num_objects + 1))
        frame_scores.append(float(np.mean([jaccard(pred, gt, k) for k in ids])))
    return float(np.mean(frame_scores))


def robot_initial(
    session: InteractiveSession,
    gt_masks: np.ndarray,
    rng: np.random.Generator,
    on_click=None,
) -> list[Annotation]:
    """One random pixel per object id, then one random background pixel.

    on_click, when given, is called after each individual click so callers
    can observe the intermediate states.
    """
    num_objects = int(gt_masks.max())
    issued = []
    for label in list(range(1, num_objects + 1)) + [0]:
        candidates = np.argwhere(gt_masks == label)
        if candidates.shape[0] == 0:
            raise ValueError(f"object id {label} absent from all frames")
        frame, row, col = candidates[int(rng.integers(candidates.shape[0]))]
        annotation = Annotation(int(frame), int(row), int(col), label)
        session.add_click(annotation)
        issued.append(annotation)
        if on_click is not None:
            on_click(annotation)
    return issued


def wrong_pixel_count(session: InteractiveSession, gt_masks: np.ndarray) -> int:
    return int((_predicted_masks(session) != gt_masks).sum())


def robot_step(
    session: InteractiveSession, gt_masks: np.ndarray, rng: np.random.Generator
) -> Annotation | None:
    """Click one uniformly random wrong pixel with its true label; None when done."""
    wrong = np.argwhere(_predicted_masks(session) != gt_masks)
    if wrong.shape[0] == 0:
        return None
    frame, row, col = wrong[int(rng.integers(wrong.shape[0]))]
    annotation = Annotation(int(frame), int(row), int(col), int(gt_masks[frame, row, col]))
    session.add_click(annotation)
    return annotation


def run_robot(
    session: InteractiveSession,
    gt_masks: np.ndarray,
    click_budget: int,
    seeds: Sequence[int],
) -> tuple[list[list[ClickCurvePoint]], list[ClickCurvePoint]]:
    """Repeat the scripted interaction per seed; budget counts every click.

    Records one curve point after each click. A run that finishes early (no
    wrong pixels left) holds its final value for the remaining budget so the
    mean curve is well defined.
    """
    num_objects = int(gt_masks.max())
    if click_budget < num_objects + 1:
        raise ValueError(f"budget below K+1 = {num_objects + 1}")
    frame_count = session.video.frame_count
    per_seed: list[list[ClickCurvePoint]] = []
    for seed in seeds:
        session.reset()
        rng = np.random.default_rng(seed)
        curve: list[ClickCurvePoint] = []
        clicks = 0

        def record(_annotation=None) -> None:
            nonlocal clicks
            clicks += 1
            curve.append(
                ClickCurvePoint(clicks / frame_count, _mean_j(session, gt_masks, num_objects))
            )

        robot_initial(session, gt_masks, rng, on_click=record)
        while clicks < click_budget:
            if robot_step(session, gt_masks, rng) is None:
                break
            record()
        while len(curve) < click_budget:
            last = curve[-1]
            curve.append(ClickCurvePoint((len(curve) + 1) / frame_count, last.mean_j))
        per_seed.append(curve)
    mean_curve = [
        ClickCurvePoint(
            float(np.mean([c[i].clicks_per_frame for c in per_seed])),
            float(np.mean([c[i].mean_j for c in per_seed])),
        )
        for i in range(click_budget)
    ]
    return per_seed, mean_curve


# ---------------------------------------------------------------------------
# Click log persistence: one line per click, "frame row col label kind"
# ---------------------------------------------------------------------------


def save_click_log(path, annotations: Sequence[Annotation]) -> None:
    with open(path, "w") as fh:
        for a in annotations:
            fh.write(f"{a.frame_index} {a.pixel_row} {a.pixel_col} {a.label} {a.kind}\n")


def load_click_log(path) -> list[Annotation]:
    annotations = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            frame, row, col, label, kind = line.split()
            annotations.append(Annotation(int(frame), int(row), int(col), int(label), kind))
    return annotations


def replay_clicks(session: InteractiveSession, annotations: Sequence[Annotation]) -> None:
    for annotation in annotations:
        session.add_click(annotation)
