"""Weakly supervised change detection trained from patch-level annotations."""

from .config import TrainConfig
from .data import (
    BiTemporalSample,
    PatchLabelGrid,
    apply_augmentations,
    crop_into_patch_grid,
    generate_patch_labels,
    load_dataset,
    local_max_downsample,
    patch_regions,
)
from .evaluate import evaluate_checkpoint, evaluate_model, predict_to_dir
from .losses import (
    LossBundle,
    block_semantic_loss,
    compute_total_loss,
    patch_classification_loss,
    unchanged_consistency_loss,
)
from .metrics import (
    ConfusionCounts,
    MetricsReport,
    accumulate_confusion,
    binarize,
    compute_metrics,
)
from .models import ChangeDetectionNetwork, MemoryTransformer, build_model
from .synth import synth_dataset
from .train import poly_learning_rate, train

__version__ = "0.1.0"

__all__ = [
    "BiTemporalSample",
    "ChangeDetectionNetwork",
    "ConfusionCounts",
    "LossBundle",
    "MemoryTransformer",
    "MetricsReport",
    "PatchLabelGrid",
    "TrainConfig",
    "accumulate_confusion",
    "apply_augmentations",
    "binarize",
    "block_semantic_loss",
    "build_model",
    "compute_metrics",
    "compute_total_loss",
    "crop_into_patch_grid",
    "evaluate_checkpoint",
    "evaluate_model",
    "generate_patch_labels",
    "load_dataset",
    "local_max_downsample",
    "patch_classification_loss",
    "patch_regions",
    "poly_learning_rate",
    "predict_to_dir",
    "synth_dataset",
    "train",
    "unchanged_consistency_loss",
]
