"""Venue category prediction from multi-view video features.

Pipeline pieces: histogram-based keyframe selection, per-view mean
pooling, a feedforward fusion network whose softmax head rows carry a
tree-structured Gaussian prior over the venue hierarchy, two-phase
cross-platform training with confidence filtering, and macro/micro-F1
evaluation.
"""

__version__ = "0.1.0"

from .features import (
    FrameFeature,
    MultiViewSample,
    load_dataset,
    mean_pool,
    pool_frame_features,
    save_dataset,
    split_dataset,
)
from .hierarchy import (
    HierarchyError,
    VenueHierarchy,
    load_hierarchy,
    normalize_leaves,
    parse_hierarchy,
    save_hierarchy,
    serialize_hierarchy,
    truncate_ancestry,
)
from .keyframes import KeyframeConfig, rgb_histogram, select_keyframes
from .metrics import EvaluationReport, argmax_predict, evaluate
from .network import (
    FusionNetwork,
    NetworkShape,
    init_network,
    load_checkpoint,
    predict_proba,
    save_checkpoint,
)
from .synth import SynthSpec, generate, noise_fraction, split_by_leaf_counts
from .transfer import (
    FilterConfig,
    FilterReport,
    PhasePlan,
    TrainedModel,
    filter_topk,
    two_phase_train,
)
from .tree_prior import (
    HeadState,
    HierPriorConfig,
    TrainConfig,
    fit,
    make_head_state,
    prior_penalty,
    total_loss,
    update_internal,
)

__all__ = [
    "EvaluationReport",
    "FilterConfig",
    "FilterReport",
    "FrameFeature",
    "FusionNetwork",
    "HeadState",
    "HierarchyError",
    "HierPriorConfig",
    "KeyframeConfig",
    "MultiViewSample",
    "NetworkShape",
    "PhasePlan",
    "SynthSpec",
    "TrainConfig",
    "TrainedModel",
    "VenueHierarchy",
    "argmax_predict",
    "evaluate",
    "filter_topk",
    "fit",
    "generate",
    "init_network",
    "load_checkpoint",
    "load_dataset",
    "load_hierarchy",
    "make_head_state",
    "mean_pool",
    "noise_fraction",
    "normalize_leaves",
    "parse_hierarchy",
    "pool_frame_features",
    "predict_proba",
    "prior_penalty",
    "rgb_histogram",
    "save_checkpoint",
    "save_dataset",
    "save_hierarchy",
    "select_keyframes",
    "serialize_hierarchy",
    "split_by_leaf_counts",
    "split_dataset",
    "total_loss",
    "truncate_ancestry",
    "two_phase_train",
    "update_internal",
]
