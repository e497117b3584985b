"""pointalign: triplet-proxy collection, cross-modal contrastive pretraining
and zero-shot recognition for real-scene point clouds."""

from .cluster import DBSCAN, dbscan_labels, select_cluster
from .collect import (
    TripletRecord,
    balanced_indices,
    collect_indoor,
    collect_outdoor,
    repeat_factors,
)
from .embeddings import FileEmbeddingProvider, SyntheticEmbeddingProvider
from .encoder import (
    DegenerateEmbeddingError,
    EncoderParams,
    backward,
    forward,
    init_params,
    sample_points,
)
from .fixtures import make_fixture
from .geometry import (
    Box2D,
    CalibrationError,
    CameraCalibration,
    Frustum,
    aabb,
    aabb_center,
    backproject_depth,
    backproject_pixels,
    build_frustum,
    points_in_frustum,
    project_points,
)
from .losses import combined_loss, image_point_loss, text_point_loss
from .metrics import EvalReport, localization_pr, recognition_report
from .training import (
    ContrastivePointEncoder,
    NonFiniteLossError,
    TrainingReport,
    learning_rate_at,
    train,
)
from .zero_shot import (
    DEFAULT_TEMPLATE,
    ClassBank,
    ZeroShotClassifier,
    build_class_bank,
    classify_proba,
    ensemble_proba,
    top_k,
)

__version__ = "0.1.0"

__all__ = [
    "Box2D",
    "CalibrationError",
    "CameraCalibration",
    "ClassBank",
    "ContrastivePointEncoder",
    "DBSCAN",
    "DEFAULT_TEMPLATE",
    "DegenerateEmbeddingError",
    "EncoderParams",
    "EvalReport",
    "FileEmbeddingProvider",
    "Frustum",
    "NonFiniteLossError",
    "SyntheticEmbeddingProvider",
    "TrainingReport",
    "TripletRecord",
    "ZeroShotClassifier",
    "aabb",
    "aabb_center",
    "backproject_depth",
    "backproject_pixels",
    "backward",
    "balanced_indices",
    "build_class_bank",
    "build_frustum",
    "classify_proba",
    "collect_indoor",
    "collect_outdoor",
    "combined_loss",
    "dbscan_labels",
    "ensemble_proba",
    "forward",
    "image_point_loss",
    "init_params",
    "learning_rate_at",
    "localization_pr",
    "make_fixture",
    "points_in_frustum",
    "project_points",
    "recognition_report",
    "repeat_factors",
    "sample_points",
    "select_cluster",
    "text_point_loss",
    "top_k",
    "train",
]
