"""Full-split inference, confusion accumulation, and prediction export."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_model
from .config import TrainConfig
from .data import BiTemporalSample, load_dataset, save_mask_png
from .metrics import ConfusionCounts, MetricsReport, accumulate_confusion, binarize, compute_metrics
from .models.network import ChangeDetectionNetwork

ARCHITECTURE_FIELDS = (
    "patch_h",
    "patch_w",
    "channels",
    "num_prototypes",
    "num_blocks",
    "pooling_ratios",
    "num_heads",
    "pre_norm",
    "no_bab",
    "no_p2m",
    "no_mp",
    "no_ap",
)


def check_eval_overrides(cfg: TrainConfig, overrides: dict) -> TrainConfig:
    """Apply evaluation-time overrides, refusing architecture changes."""
    for field in ARCHITECTURE_FIELDS:
        if field in overrides and overrides[field] != getattr(cfg, field):
            raise ValueError(
                f"checkpoint incompatible with requested override: field {field!r} "
                f"is {getattr(cfg, field)!r} in the checkpoint, "
                f"{overrides[field]!r} requested"
            )
    return cfg.with_overrides(overrides)


def _batch_images(samples: list[BiTemporalSample], cfg: TrainConfig) -> tuple[torch.Tensor, torch.Tensor]:
    t1 = torch.from_numpy(np.stack([s.image_t1 for s in samples])).permute(0, 3, 1, 2).float()
    t2 = torch.from_numpy(np.stack([s.image_t2 for s in samples])).permute(0, 3, 1, 2).float()
    if cfg.normalize_mean is not None:
        mean = torch.tensor(cfg.normalize_mean).view(1, 3, 1, 1)
        std = torch.tensor(cfg.normalize_std).view(1, 3, 1, 1)
        t1, t2 = (t1 - mean) / std, (t2 - mean) / std
    return t1, t2


def predict_probabilities(
    model: ChangeDetectionNetwork,
    samples: list[BiTemporalSample],
    cfg: TrainConfig,
    batch_size: int | None = None,
) -> list[np.ndarray]:
    """Deterministic change probabilities per sample, in input order."""
    model.eval()
    batch_size = batch_size or cfg.batch_size
    maps: list[np.ndarray] = []
    with torch.inference_mode():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            t1, t2 = _batch_images(chunk, cfg)
            probs = model(t1, t2)["probabilities"].cpu().numpy()
            maps.extend(probs[i] for i in range(probs.shape[0]))
    return maps


def evaluate_model(
    model: ChangeDetectionNetwork,
    samples: list[BiTemporalSample],
    cfg: TrainConfig,
    threshold: float | None = None,
    checkpoint_id: str | None = None,
    gt_as_prediction: bool = False,
) -> MetricsReport:
    """Accumulate confusion counts over a split and derive the metrics.

    `gt_as_prediction` short-circuits the model and scores the ground truth
    against itself (debug oracle: every metric must be exactly 1).
    """
    if not samples:
        raise ValueError("cannot evaluate an empty split")
    threshold = cfg.threshold if threshold is None else threshold
    counts = ConfusionCounts()
    if gt_as_prediction:
        for sample in samples:
            counts = counts + accumulate_confusion(sample.pixel_mask, sample.pixel_mask)
    else:
        maps = predict_probabilities(model, samples, cfg)
        for sample, prob in zip(samples, maps):
            if sample.pixel_mask is None:
                raise ValueError(f"sample {sample.id} has no ground-truth mask")
            counts = counts + accumulate_confusion(binarize(prob, threshold), sample.pixel_mask)
    return compute_metrics(
        counts,
        patch_size=(cfg.patch_h, cfg.patch_w),
        checkpoint_id=checkpoint_id,
        threshold=threshold,
    )


def evaluate_checkpoint(
    checkpoint_path: str | Path,
    dataset_root: str | Path,
    split: str = "test",
    threshold: float | None = None,
    overrides: dict | None = None,
    gt_as_prediction: bool = False,
) -> MetricsReport:
    model, cfg, _ = load_model(checkpoint_path)
    if overrides:
        cfg = check_eval_overrides(cfg, overrides)
    samples = load_dataset(dataset_root, split)
    return evaluate_model(
        model,
        samples,
        cfg,
        threshold=threshold,
        checkpoint_id=Path(checkpoint_path).stem,
        gt_as_prediction=gt_as_prediction,
    )


def predict_to_dir(
    checkpoint_path: str | Path,
    dataset_root: str | Path,
    split: str,
    out_dir: str | Path,
    threshold: float | None = None,
) -> list[Path]:
    """Write binarized change maps as 0/255 PNGs, one per sample id."""
    model, cfg, _ = load_model(checkpoint_path)
    samples = load_dataset(dataset_root, split)
    threshold = cfg.threshold if threshold is None else threshold
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    maps = predict_probabilities(model, samples, cfg)
    paths = []
    for sample, prob in zip(samples, maps):
        path = out / f"{sample.id}.png"
        save_mask_png(path, binarize(prob, threshold))
        paths.append(path)
    return paths
