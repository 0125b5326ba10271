"""Human-in-the-loop volumetric segmentation: text-seeded masks, point-prompt
refinement, IoU-guarded slice propagation, contrastive reference retrieval,
and true-scale mesh export, served over a WebSocket protocol."""

__version__ = "0.1.0"

from .errors import (
    BackendError,
    CommandParseError,
    PromptError,
    RetrievalError,
    StateViolation,
    VolumeFormatError,
    VoxloopError,
)
from .metrics import dice, smooth_direction
from .profiles import ProfileSet, TargetProfile, load_profiles, save_profiles
from .propagation import (
    PropagationConfig,
    PropagationReport,
    inter_slice_iou,
    propagate_bidirectional,
)
from .segmenter import (
    BuiltinSegmenter,
    PointPrompt,
    parse_command,
    refine_with_prompts,
    seed_segment,
)
from .service import ServiceConfig, create_app
from .session import Session, SessionConfig, replay_events
from .volume import (
    MaskVolume,
    SliceImage,
    Volume,
    load_mask,
    load_volume,
    mask_roundtrip,
    save_mask,
    save_volume,
    slice_at,
    window_normalize,
)

__all__ = [
    "BackendError",
    "BuiltinSegmenter",
    "CommandParseError",
    "MaskVolume",
    "PointPrompt",
    "ProfileSet",
    "PromptError",
    "PropagationConfig",
    "PropagationReport",
    "RetrievalError",
    "ServiceConfig",
    "Session",
    "SessionConfig",
    "SliceImage",
    "StateViolation",
    "TargetProfile",
    "Volume",
    "VolumeFormatError",
    "VoxloopError",
    "create_app",
    "dice",
    "inter_slice_iou",
    "load_mask",
    "load_profiles",
    "load_volume",
    "mask_roundtrip",
    "parse_command",
    "propagate_bidirectional",
    "refine_with_prompts",
    "replay_events",
    "save_mask",
    "save_profiles",
    "save_volume",
    "seed_segment",
    "slice_at",
    "smooth_direction",
    "window_normalize",
]
