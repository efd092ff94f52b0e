"""Video object segmentation by pixel-wise retrieval in a learned embedding space."""

from .core import Annotation, GridCoord, Video, load_sequence, save_sequence
from .embed import EmbedConfig, HeadParams, embed_video, head_init, load_head, save_head
from .loss import TrainConfig, proposed_loss, train
from .metrics import SequenceScore, boundary_f, evaluate_sequence, jaccard
from .retrieval import (
    ReferencePool,
    SegmentConfig,
    classify_grid,
    segment_video_semisupervised,
    upsample_labels,
)
from .session import InteractiveSession, SessionConfig, run_robot
from .synthdata import SceneSpec, generate_sequence, preset_scene

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "EmbedConfig",
    "GridCoord",
    "HeadParams",
    "InteractiveSession",
    "ReferencePool",
    "SceneSpec",
    "SegmentConfig",
    "SequenceScore",
    "SessionConfig",
    "TrainConfig",
    "Video",
    "boundary_f",
    "classify_grid",
    "embed_video",
    "evaluate_sequence",
    "generate_sequence",
    "head_init",
    "jaccard",
    "load_head",
    "load_sequence",
    "preset_scene",
    "proposed_loss",
    "run_robot",
    "save_head",
    "save_sequence",
    "segment_video_semisupervised",
    "train",
    "upsample_labels",
]
