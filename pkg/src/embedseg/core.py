"""Shared domain types, validation, and the on-disk sequence format."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

ANNOTATION_KINDS = ("click", "scribble-point", "mask-pixel")


@dataclass(frozen=True)
class GridCoord:
    """Position of one cell on the stride-s lattice of one frame."""

    frame_index: int
    grid_row: int
    grid_col: int


@dataclass(frozen=True)
class Annotation:
    """A single labeled pixel at full image resolution."""

    frame_index: int
    pixel_row: int
    pixel_col: int
    label: int
    kind: str = "click"

    def __post_init__(self) -> None:
        if self.kind not in ANNOTATION_KINDS:
            raise ValueError(f"unknown annotation kind {self.kind!r}")
        if self.label < 0:
            raise ValueError("label must be non-negative")


@dataclass(frozen=True)
class Video:
    """A frame sequence as a (frame_count, height, width, 3) array in [0, 1].

    Instances are treated as immutable after construction and may be shared
    freely across threads.
    """

    frames: np.ndarray

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @classmethod
    def from_frames(cls, frames: Sequence[np.ndarray]) -> "Video":
        """Stack per-frame arrays, raising on any invariant violation."""
        problems = validate_video(frames)
        if problems:
            raise ValueError("; ".join(problems))
        stacked = np.stack([np.asarray(f, dtype=np.float64) for f in frames])
        stacked.setflags(write=False)
        return cls(frames=stacked)


def validate_video(video: "Video | Sequence[np.ndarray] | np.ndarray") -> list[str]:
    """Check video invariants; an empty list means the input is well formed."""
    if isinstance(video, Video):
        frames: Sequence[np.ndarray] = list(video.frames)
    elif isinstance(video, np.ndarray):
        if video.ndim != 4:
            return [f"expected a 4-d frame stack, got {video.ndim} dimensions"]
        frames = list(video)
    else:
        frames = list(video)

    problems: list[str] = []
    if not frames:
        return ["video has no frames"]
    ref_shape = np.asarray(frames[0]).shape
    if len(ref_shape) != 3 or ref_shape[2] != 3:
        problems.append(f"frame 0 is not height x width x 3 (shape {ref_shape})")
        return problems
    for index, frame in enumerate(frames):
        arr = np.asarray(frame, dtype=np.float64)
        if arr.shape != ref_shape:
            problems.append(f"dimension mismatch at frame {index}: {arr.shape} != {ref_shape}")
            continue
        if not np.all(np.isfinite(arr)):
            problems.append(f"non-finite channel value in frame {index}")
        elif arr.min() < 0.0 or arr.max() > 1.0:
            problems.append(f"channel out of range in frame {index}")
    return problems


def validate_masks(masks: np.ndarray, height: int, width: int, num_objects: int) -> list[str]:
    """Check a (frame_count, height, width) label stack against the video shape and K."""
    problems: list[str] = []
    masks = np.asarray(masks)
    if masks.ndim != 3:
        return [f"expected a 3-d mask stack, got {masks.ndim} dimensions"]
    if masks.shape[1:] != (height, width):
        problems.append(f"mask dimensions {masks.shape[1:]} do not match video {height}x{width}")
    if masks.size and masks.min() < 0:
        problems.append("negative label value")
    if masks.size and masks.max() > num_objects:
        problems.append(f"label {int(masks.max())} exceeds declared object count {num_objects}")
    return problems


def grid_shape(height: int, width: int, stride: int) -> tuple[int, int]:
    """Grid dimensions at the given stride (ceil division)."""
    return math.ceil(height / stride), math.ceil(width / stride)


def full_to_grid(
    pixel_row: int,
    pixel_col: int,
    stride: int,
    height: int | None = None,
    width: int | None = None,
) -> tuple[int, int]:
    """Map full-resolution pixel coordinates to their stride-grid cell.

    Bounds are checked only when height/width are supplied; negative
    coordinates always raise.
    """
    if stride < 1:
        raise ValueError("stride must be positive")
    if pixel_row < 0 or pixel_col < 0:
        raise ValueError(f"pixel ({pixel_row}, {pixel_col}) out of bounds")
    if height is not None and pixel_row >= height:
        raise ValueError(f"pixel row {pixel_row} out of bounds for height {height}")
    if width is not None and pixel_col >= width:
        raise ValueError(f"pixel col {pixel_col} out of bounds for width {width}")
    return pixel_row // stride, pixel_col // stride


def mask_to_cell_labels(mask: np.ndarray, stride: int) -> np.ndarray:
    """Label each stride-grid cell with the majority pixel label inside it.

    Exact pixel-count ties go to the smaller label id.
    """
    mask = np.asarray(mask)
    grid_rows, grid_cols = grid_shape(mask.shape[0], mask.shape[1], stride)
    labels = np.zeros((grid_rows, grid_cols), dtype=np.int32)
    for gr in range(grid_rows):
        for gc in range(grid_cols):
            patch = mask[gr * stride : (gr + 1) * stride, gc * stride : (gc + 1) * stride]
            counts = np.bincount(patch.ravel())
            labels[gr, gc] = int(np.argmax(counts))
    return labels


# ---------------------------------------------------------------------------
# Directory format: frame_0000.png ... plus metadata.txt and optional masks.
# ---------------------------------------------------------------------------

METADATA_FILE = "metadata.txt"


def save_sequence(
    out_dir: "Path | str",
    video: Video,
    masks: np.ndarray | None = None,
    num_objects: int = 0,
) -> Path:
    """Write a video (and optional masks) in the numbered-image directory format."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for j in range(video.frame_count):
        frame8 = np.clip(np.round(video.frames[j] * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(frame8, mode="RGB").save(out / f"frame_{j:04d}.png")
    if masks is not None:
        for j in range(masks.shape[0]):
            Image.fromarray(masks[j].astype(np.uint8), mode="L").save(out / f"mask_{j:04d}.png")
    meta = {
        "height": video.height,
        "width": video.width,
        "frame_count": video.frame_count,
        "k": num_objects,
    }
    lines = [f"{key}={value}" for key, value in meta.items()]
    (out / METADATA_FILE).write_text("\n".join(lines) + "\n")
    return out


def load_sequence(seq_dir: "Path | str") -> tuple[Video, np.ndarray | None, int]:
    """Read a sequence directory; returns (video, masks or None, K)."""
    seq = Path(seq_dir)
    meta_path = seq / METADATA_FILE
    if not meta_path.is_file():
        raise FileNotFoundError(f"missing {METADATA_FILE} in {seq}")
    meta: dict[str, int] = {}
    for line in meta_path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = int(value.strip())
    frame_count = meta["frame_count"]
    frames = []
    for j in range(frame_count):
        with Image.open(seq / f"frame_{j:04d}.png") as img:
            frames.append(np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0)
    video = Video.from_frames(frames)
    masks = None
    if (seq / "mask_0000.png").is_file():
        stack = []
        for j in range(frame_count):
            with Image.open(seq / f"mask_{j:04d}.png") as img:
                stack.append(np.asarray(img, dtype=np.int32))
        masks = np.stack(stack)
    return video, masks, meta.get("k", 0)
