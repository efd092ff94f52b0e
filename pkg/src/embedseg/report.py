"""Figure rendering for the CLI report paths.

Each figure is written next to its CSV so a run directory is self-describing.
Uses the Agg backend; nothing here opens a window.
"""

from __future__ import annotations

import csv
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .loss import IterationRecord
from .metrics import SequenceScore
from .session import ClickCurvePoint

FIG_SIZE = (6.4, 4.0)
DPI = 120


def save_loss_figure(path, curve: Sequence[IterationRecord]) -> None:
    fig, ax = plt.subplots(figsize=FIG_SIZE, dpi=DPI)
    iterations = [r.iteration for r in curve]
    losses = [r.total_loss for r in curve]
    ax.plot(iterations, losses, lw=0.8, color="#888888", label="per iteration")
    window = max(1, len(curve) // 25)
    if window > 1:
        smoothed = [
            sum(losses[max(0, i - window + 1) : i + 1]) / len(losses[max(0, i - window + 1) : i + 1])
            for i in range(len(losses))
        ]
        ax.plot(iterations, smoothed, lw=1.8, color="#c0392b", label=f"rolling mean ({window})")
        ax.legend(frameon=False)
    ax.set_xlabel("iteration")
    ax.set_ylabel("batch loss")
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_score_figure(path, scores: dict[str, SequenceScore]) -> None:
    """Per-frame J and F for one or more sequences."""
    fig, (ax_j, ax_f) = plt.subplots(1, 2, figsize=(9.6, 4.0), dpi=DPI, sharey=True)
    for name, score in scores.items():
        frames = range(len(score.per_frame_j))
        ax_j.plot(frames, score.per_frame_j, marker=".", lw=1.0, label=name)
        ax_f.plot(frames, score.per_frame_f, marker=".", lw=1.0, label=name)
    ax_j.set_title("region similarity J")
    ax_f.set_title("contour accuracy F")
    for ax in (ax_j, ax_f):
        ax.set_xlabel("frame")
        ax.set_ylim(0.0, 1.05)
        ax.spines["right"].set_visible(False)
        ax.spines["top"].set_visible(False)
    ax_j.set_ylabel("score")
    if len(scores) > 1:
        ax_j.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_click_curve_figure(
    path, per_seed: Sequence[Sequence[ClickCurvePoint]], mean_curve: Sequence[ClickCurvePoint]
) -> None:
    fig, ax = plt.subplots(figsize=FIG_SIZE, dpi=DPI)
    for i, curve in enumerate(per_seed):
        ax.plot(
            [p.clicks_per_frame for p in curve],
            [p.mean_j for p in curve],
            lw=0.8,
            color="#aaaacc",
            label="per seed" if i == 0 else None,
        )
    ax.plot(
        [p.clicks_per_frame for p in mean_curve],
        [p.mean_j for p in mean_curve],
        lw=2.0,
        color="#2c3e50",
        marker="o",
        ms=3,
        label="mean",
    )
    ax.set_xlabel("clicks per frame")
    ax.set_ylabel("mean J")
    ax.set_ylim(0.0, 1.05)
    ax.legend(frameon=False)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Delimited outputs the figures sit next to
# ---------------------------------------------------------------------------


def write_metrics_csv(path, scores: dict[str, SequenceScore]) -> None:
    """Rows: sequence, frame, object-averaged J and F; one summary row per sequence."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence", "frame", "J", "F"])
        for name, score in scores.items():
            for j, (jv, fv) in enumerate(zip(score.per_frame_j, score.per_frame_f)):
                writer.writerow([name, j, f"{jv:.6f}", f"{fv:.6f}"])
            writer.writerow([name, "mean", f"{score.mean_j:.6f}", f"{score.mean_f:.6f}"])


def write_click_curve_csv(
    path, per_seed: Sequence[Sequence[ClickCurvePoint]], mean_curve: Sequence[ClickCurvePoint]
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "clicks_per_frame", "mean_J"])
        for s, curve in enumerate(per_seed):
            for point in curve:
                writer.writerow([f"seed{s}", f"{point.clicks_per_frame:.6f}", f"{point.mean_j:.6f}"])
        for point in mean_curve:
            writer.writerow(["mean", f"{point.clicks_per_frame:.6f}", f"{point.mean_j:.6f}"])
