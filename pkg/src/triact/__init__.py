"""triact: three-pathway, multi-frame-rate hierarchical action recognition.

A video with a hierarchical (event / set / element) action label is
sampled at three frame rates, one backbone per rate produces a feature
vector, and a joint head fuses the three features to predict all levels
at once. Training is two-staged: bases first, then a joint head over
frozen bases.
"""

__version__ = "0.1.0"

from .checkpoints import (
    BASE_FORMAT,
    JOINT_FORMAT,
    CheckpointError,
    load_checkpoint,
    module_digest,
    save_checkpoint,
    state_digest,
)
from .datasets import (
    ClipViews,
    ManifestRow,
    assemble_batch,
    load_clip_views,
    load_manifest,
    save_manifest,
)
from .evaluation import (
    PredictionRecord,
    aggregate_clips,
    build_report,
    format_report,
    hierarchy_consistency_rate,
    mean_class_accuracy,
    top_k_accuracy,
)
from .heads import JointHead, JointHeadConfig, JointLogits, joint_forward
from .losses import LossWeights, cross_entropy, multi_task_loss, total_loss
from .pathway import (
    FeatureVector,
    LevelClassifier,
    PathwayBackbone,
    PathwayConfig,
    build_backbone,
    pathway_forward,
    tiny_config,
)
from .sampling import (
    DEFAULT_RATES,
    Normalization,
    SamplingSpec,
    default_specs,
    plan_indices,
    plan_multi_level_indices,
)
from .synthetic import SynthError, SynthSpec, generate
from .taxonomy import (
    LEVELS,
    LabelTriple,
    Taxonomy,
    TaxonomyError,
    build_taxonomy,
    lift,
    load_taxonomy,
    save_taxonomy,
    validate_triple,
)
from .training import (
    OptimizerConfig,
    TrainingDiverged,
    TrainResult,
    lr_for_epoch,
    predict_base,
    predict_joint,
    stage2_defaults,
    train_base,
    train_joint,
)

__all__ = [
    "__version__",
    "BASE_FORMAT", "JOINT_FORMAT", "CheckpointError", "load_checkpoint",
    "module_digest", "save_checkpoint", "state_digest",
    "ClipViews", "ManifestRow", "assemble_batch", "load_clip_views",
    "load_manifest", "save_manifest",
    "PredictionRecord", "aggregate_clips", "build_report", "format_report",
    "hierarchy_consistency_rate", "mean_class_accuracy", "top_k_accuracy",
    "JointHead", "JointHeadConfig", "JointLogits", "joint_forward",
    "LossWeights", "cross_entropy", "multi_task_loss", "total_loss",
    "FeatureVector", "LevelClassifier", "PathwayBackbone", "PathwayConfig",
    "build_backbone", "pathway_forward", "tiny_config",
    "DEFAULT_RATES", "Normalization", "SamplingSpec", "default_specs",
    "plan_indices", "plan_multi_level_indices",
    "SynthError", "SynthSpec", "generate",
    "LEVELS", "LabelTriple", "Taxonomy", "TaxonomyError", "build_taxonomy",
    "lift", "load_taxonomy", "save_taxonomy", "validate_triple",
    "OptimizerConfig", "TrainingDiverged", "TrainResult", "lr_for_epoch",
    "predict_base", "predict_joint", "stage2_defaults", "train_base",
    "train_joint",
]
