"""Region similarity J and contour accuracy F for label masks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import binary_dilation


def _check_shapes(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"mask dimension mismatch: {pred.shape} vs {gt.shape}")


def jaccard(pred: np.ndarray, gt: np.ndarray, object_id: int) -> float:
    """Intersection over union of one object's pixels; 1.0 when both are empty."""
    _check_shapes(pred, gt)
    if object_id < 1:
        raise ValueError("object_id must be at least 1")
    p = pred == object_id
    g = gt == object_id
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def boundary_pixels(mask: np.ndarray, object_id: int) -> np.ndarray:
    """Object pixels with a non-object 4-neighbor; the image border counts as non-object."""
    obj = mask == object_id
    padded = np.pad(obj, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return obj & ~interior


def default_tolerance(height: int, width: int) -> int:
    return max(1, round(0.008 * float(np.hypot(height, width))))


def boundary_f(
    pred: np.ndarray, gt: np.ndarray, object_id: int, tolerance_px: int | None = None
) -> float:
    """Boundary F-measure with Chebyshev tolerance-ball matching."""
    _check_shapes(pred, gt)
    if tolerance_px is None:
        tolerance_px = default_tolerance(*pred.shape)
    pb = boundary_pixels(pred, object_id)
    gb = boundary_pixels(gt, object_id)
    n_pred = int(pb.sum())
    n_gt = int(gb.sum())
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    if tolerance_px > 0:
        ball = np.ones((2 * tolerance_px + 1, 2 * tolerance_px + 1), dtype=bool)
        gb_region = binary_dilation(gb, structure=ball)
        pb_region = binary_dilation(pb, structure=ball)
    else:
        gb_region = gb
        pb_region = pb
    precision = float((pb & gb_region).sum() / n_pred)
    recall = float((gb & pb_region).sum() / n_gt)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class SequenceScore:
    per_frame_j: tuple[float, ...]
    per_frame_f: tuple[float, ...]
    mean_j: float
    mean_f: float

    @property
    def mean_jf(self) -> float:
        return (self.mean_j + self.mean_f) / 2.0


def evaluate_sequence(
    preds: Sequence[np.ndarray],
    gts: Sequence[np.ndarray],
    num_objects: int,
    tolerance_px: int | None = None,
    exclude_first_frame: bool = False,
) -> SequenceScore:
    """Per-frame J and F averaged over the object ids present in each gt frame.

    A frame whose gt contains no object at all is scored over all ids 1..K
    (an id empty in both masks scores 1). Set exclude_first_frame when frame 0
    supplied the annotation.
    """
    if len(preds) != len(gts):
        raise ValueError(f"sequence length mismatch: {len(preds)} vs {len(gts)}")
    if num_objects < 1:
        raise ValueError("num_objects must be at least 1")
    per_j = []
    per_f = []
    for pred, gt in zip(preds, gts):
        present = [k for k in range(1, num_objects + 1) if (gt == k).any()]
        ids = present if present else list(range(1, num_objects + 1))
        per_j.append(float(np.mean([jaccard(pred, gt, k) for k in ids])))
        per_f.append(float(np.mean([boundary_f(pred, gt, k, tolerance_px) for k in ids])))
    scored_j = per_j[1:] if exclude_first_frame else per_j
    scored_f = per_f[1:] if exclude_first_frame else per_f
    if not scored_j:
        raise ValueError("no frames left to score")
    return SequenceScore(
        per_frame_j=tuple(per_j),
        per_frame_f=tuple(per_f),
        mean_j=float(np.mean(scored_j)),
        mean_f=float(np.mean(scored_f)),
    )
