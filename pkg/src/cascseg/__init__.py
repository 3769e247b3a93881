"""Staged cascade instance segmentation for overlapping curvilinear structures."""

from .backends import (
    MalformedResponse,
    OracleBackend,
    OracleBehavior,
    RemoteBackend,
    RemoteUnavailable,
    SegmenterBackend,
    SegmenterError,
    SegmentTimeout,
    ViewTransform,
    oracle_from_scene,
    remote_segment,
    segment,
)
from .cascade import (
    CascadeConfig,
    CascadeState,
    InstanceRecord,
    MatchLink,
    PipelineError,
    RecordKind,
    run_pipeline,
)
from .config import BackendConfig, PipelineConfig, config_from_dict, load_config, save_config
from .estimator import CascadeSegmenter
from .matching import HeadGeometry, MatchCandidate, MatchConfig, fit_ellipse, match_and_splice
from .metrics import EvalMode, EvalReport, dice, evaluate, iou, optimal_pairing
from .preprocess import PreprocessConfig, denoise, enhance
from .skeleton import MaskKind, Skeleton, classify, find_endpoints, skeletonize, terminal_slope
from .synth import SceneParams, SpermInstance, SyntheticScene, export_scene, generate, load_scene

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "CascadeConfig",
    "CascadeSegmenter",
    "CascadeState",
    "EvalMode",
    "EvalReport",
    "HeadGeometry",
    "InstanceRecord",
    "MalformedResponse",
    "MaskKind",
    "MatchCandidate",
    "MatchConfig",
    "MatchLink",
    "OracleBackend",
    "OracleBehavior",
    "PipelineConfig",
    "PipelineError",
    "PreprocessConfig",
    "RecordKind",
    "RemoteBackend",
    "RemoteUnavailable",
    "SceneParams",
    "SegmenterBackend",
    "SegmenterError",
    "SegmentTimeout",
    "Skeleton",
    "SpermInstance",
    "SyntheticScene",
    "ViewTransform",
    "classify",
    "config_from_dict",
    "denoise",
    "dice",
    "enhance",
    "evaluate",
    "export_scene",
    "find_endpoints",
    "fit_ellipse",
    "generate",
    "iou",
    "load_config",
    "load_scene",
    "match_and_splice",
    "optimal_pairing",
    "oracle_from_scene",
    "remote_segment",
    "run_pipeline",
    "save_config",
    "segment",
    "skeletonize",
    "terminal_slope",
]
