"""Per-cell embedding model.

A frame is divided into a stride grid; each cell gets an 8-dimensional
hand-crafted base feature vector, three appended coordinate channels, and a
two-layer fully connected head applied independently per cell. Embeddings are
a function of (video, params, config) only; user annotations never enter.

Grids are plain float64 arrays shaped (grid_rows, grid_cols, dim).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .core import Video, grid_shape

BASE_FEATURE_DIM = 8
COORDINATE_CHANNELS = 3

DEFAULT_STRIDE = 8
DEFAULT_EMBED_DIM = 128
DEFAULT_HIDDEN_DIM = 64
DEFAULT_LAMBDA_SPACE = 1.0
DEFAULT_LAMBDA_TIME = 1.0

_HEAD_MAGIC = b"ESHD"
_GRID_MAGIC = b"ESEM"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EmbedConfig:
    """Everything besides the video and head params that embeddings depend on."""

    stride: int = DEFAULT_STRIDE
    embed_dim: int = DEFAULT_EMBED_DIM
    hidden_dim: int = DEFAULT_HIDDEN_DIM
    lambda_space: float = DEFAULT_LAMBDA_SPACE
    lambda_time: float = DEFAULT_LAMBDA_TIME

    @property
    def input_dim(self) -> int:
        return BASE_FEATURE_DIM + COORDINATE_CHANNELS


@dataclass
class HeadParams:
    """Two-layer head: input -> hidden -> output, nonlinearity between layers.

    activation "identity" exists for identity-composition tests and is not
    part of the serialized format; files always round-trip as "tanh".
    """

    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (output, hidden)
    b2: np.ndarray  # (output,)
    activation: str = "tanh"

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.w1.shape[1], self.w1.shape[0], self.w2.shape[0])

    @property
    def parameter_count(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def copy(self) -> "HeadParams":
        return replace(
            self, w1=self.w1.copy(), b1=self.b1.copy(), w2=self.w2.copy(), b2=self.b2.copy()
        )


def head_init(seed: int, dims: tuple[int, int, int], activation: str = "tanh") -> HeadParams:
    """Gaussian weights scaled by 1/sqrt(fan_in), zero biases; deterministic in seed."""
    input_dim, hidden_dim, output_dim = dims
    if min(dims) < 1:
        raise ValueError("head dimensions must be positive")
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=(hidden_dim, input_dim))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(output_dim, hidden_dim))
    return HeadParams(
        w1=w1,
        b1=np.zeros(hidden_dim),
        w2=w2,
        b2=np.zeros(output_dim),
        activation=activation,
    )


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z)
    if activation == "identity":
        return z
    raise ValueError(f"unknown activation {activation!r}")


def _activation_grad_from_output(a: np.ndarray, activation: str) -> np.ndarray:
    # derivative of the activation expressed through its output value
    if activation == "tanh":
        return 1.0 - a**2
    if activation == "identity":
        return np.ones_like(a)
    raise ValueError(f"unknown activation {activation!r}")


# ---------------------------------------------------------------------------
# Base features and coordinate channels
# ---------------------------------------------------------------------------


def extract_base_features(frame: np.ndarray, stride: int) -> np.ndarray:
    """Per-cell features: mean RGB, std RGB, mean horizontal and vertical
    intensity gradient. Returns (grid_rows, grid_cols, 8)."""
    frame = np.asarray(frame, dtype=np.float64)
    height, width = frame.shape[:2]
    if stride > height and stride > width:
        raise ValueError("stride larger than both image dimensions")
    rows, cols = grid_shape(height, width, stride)
    intensity = frame.mean(axis=2)
    if height > 1:
        grad_v = np.gradient(intensity, axis=0)
    else:
        grad_v = np.zeros_like(intensity)
    if width > 1:
        grad_h = np.gradient(intensity, axis=1)
    else:
        grad_h = np.zeros_like(intensity)

    out = np.empty((rows, cols, BASE_FEATURE_DIM))
    for gr in range(rows):
        r0, r1 = gr * stride, min((gr + 1) * stride, height)
        for gc in range(cols):
            c0, c1 = gc * stride, min((gc + 1) * stride, width)
            patch = frame[r0:r1, c0:c1]
            out[gr, gc, 0:3] = patch.mean(axis=(0, 1))
            out[gr, gc, 3:6] = patch.std(axis=(0, 1))
            out[gr, gc, 6] = grad_h[r0:r1, c0:c1].mean()
            out[gr, gc, 7] = grad_v[r0:r1, c0:c1].mean()
    return out


def augment_spatiotemporal(
    features: np.ndarray,
    frame_index: int,
    frame_count: int,
    lambda_space: float,
    lambda_time: float,
) -> np.ndarray:
    """Append scaled normalized (col, row, frame) channels.

    Any axis with a single element normalizes to 0 rather than 0/0.
    """
    rows, cols = features.shape[:2]
    if not 0 <= frame_index < frame_count:
        raise ValueError("frame_index out of range")
    col_channel = np.zeros((rows, cols))
    row_channel = np.zeros((rows, cols))
    if cols > 1:
        col_channel[:] = lambda_space * (np.arange(cols) / (cols - 1))[None, :]
    if rows > 1:
        row_channel[:] = lambda_space * (np.arange(rows) / (rows - 1))[:, None]
    if frame_count > 1:
        time_value = lambda_time * (frame_index / (frame_count - 1))
    else:
        time_value = 0.0
    time_channel = np.full((rows, cols), time_value)
    return np.concatenate(
        [features, col_channel[..., None], row_channel[..., None], time_channel[..., None]],
        axis=-1,
    )


# ---------------------------------------------------------------------------
# Head forward / backward
# ---------------------------------------------------------------------------


def head_forward(params: HeadParams, grid: np.ndarray) -> np.ndarray:
    """Apply the head independently per cell; works on any leading shape."""
    if grid.shape[-1] != params.dims[0]:
        raise ValueError(
            f"input dimension {grid.shape[-1]} does not match head input {params.dims[0]}"
        )
    z1 = grid @ params.w1.T + params.b1
    a1 = _activate(z1, params.activation)
    return a1 @ params.w2.T + params.b2


def head_forward_cached(params: HeadParams, x: np.ndarray):
    """Forward on a flat (n, input) batch, keeping intermediates for backward."""
    z1 = x @ params.w1.T + params.b1
    a1 = _activate(z1, params.activation)
    y = a1 @ params.w2.T + params.b2
    return y, {"x": x, "a1": a1}


def head_backward(params: HeadParams, cache: dict, upstream: np.ndarray) -> dict:
    """Gradients of sum(upstream * output) w.r.t. the head parameters."""
    a1 = cache["a1"]
    d_w2 = upstream.T @ a1
    d_b2 = upstream.sum(axis=0)
    g_a1 = upstream @ params.w2
    g_z1 = g_a1 * _activation_grad_from_output(a1, params.activation)
    d_w1 = g_z1.T @ cache["x"]
    d_b1 = g_z1.sum(axis=0)
    return {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2}


# ---------------------------------------------------------------------------
# Whole-video embedding
# ---------------------------------------------------------------------------


def augmented_video_features(video: Video, config: EmbedConfig) -> np.ndarray:
    """Stacked augmented features, shape (frames, grid_rows, grid_cols, 11)."""
    grids = []
    for j in range(video.frame_count):
        base = extract_base_features(video.frames[j], config.stride)
        grids.append(
            augment_spatiotemporal(
                base, j, video.frame_count, config.lambda_space, config.lambda_time
            )
        )
    return np.stack(grids)


def embed_video(video: Video, params: HeadParams, config: EmbedConfig) -> np.ndarray:
    """Embeddings for every cell of every frame: (frames, grid_rows, grid_cols, d)."""
    return head_forward(params, augmented_video_features(video, config))


# ---------------------------------------------------------------------------
# Serialization: versioned binary, float64 row-major, layer order w1 b1 w2 b2
# ---------------------------------------------------------------------------


def save_head(path, params: HeadParams) -> None:
    input_dim, hidden_dim, output_dim = params.dims
    with open(path, "wb") as fh:
        fh.write(_HEAD_MAGIC)
        fh.write(struct.pack("<IIII", _FORMAT_VERSION, input_dim, hidden_dim, output_dim))
        for array in (params.w1, params.b1, params.w2, params.b2):
            fh.write(np.ascontiguousarray(array, dtype=np.float64).tobytes())


def load_head(path) -> HeadParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _HEAD_MAGIC:
            raise ValueError(f"not a head parameter file: bad magic {magic!r}")
        version, input_dim, hidden_dim, output_dim = struct.unpack("<IIII", fh.read(16))
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported head file version {version}")

        def read_array(shape):
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
            return data.reshape(shape).copy()

        return HeadParams(
            w1=read_array((hidden_dim, input_dim)),
            b1=read_array((hidden_dim,)),
            w2=read_array((output_dim, hidden_dim)),
            b2=read_array((output_dim,)),
        )


def save_embedding_grid(path, grid: np.ndarray) -> None:
    """Cache one frame's EmbeddingGrid (rows, cols, d) in the same float format."""
    if grid.ndim != 3:
        raise ValueError("embedding grid must be 3-dimensional")
    with open(path, "wb") as fh:
        fh.write(_GRID_MAGIC)
        fh.write(struct.pack("<IIII", _FORMAT_VERSION, *grid.shape))
        fh.write(np.ascontiguousarray(grid, dtype=np.float64).tobytes())


def load_embedding_grid(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _GRID_MAGIC:
            raise ValueError(f"not an embedding grid file: bad magic {magic!r}")
        version, rows, cols, dim = struct.unpack("<IIII", fh.read(16))
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported embedding file version {version}")
        count = rows * cols * dim
        data = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
        return data.reshape((rows, cols, dim)).copy()
