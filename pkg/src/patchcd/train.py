"""Iteration-based training loop with polynomial LR decay and checkpointing.

Batch composition and augmentation draws at iteration i are pure functions of
(seed, i), so training is deterministic for a given seed on a single device
and resuming from a checkpoint continues the exact uninterrupted trajectory.
"""

from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint, restore_model, restore_optimizer, save_checkpoint
from .config import TrainConfig
from .data import BiTemporalSample, apply_augmentations, generate_patch_labels, load_dataset
from .losses import LossBundle, compute_total_loss
from .models.network import ChangeDetectionNetwork, build_model


def poly_learning_rate(
    cur_iteration: int, base_lr: float, lr_power: float, max_iterations: int
) -> float:
    """lr = (1 - cur/max)^power * base_lr, defined on 0 <= cur <= max."""
    if not 0 <= cur_iteration <= max_iterations:
        raise ValueError(
            f"iteration {cur_iteration} outside schedule range [0, {max_iterations}]"
        )
    return (1.0 - cur_iteration / max_iterations) ** lr_power * base_lr


@dataclasses.dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    history: list[dict]
    final_iteration: int


def _images_to_tensor(images: list[np.ndarray], cfg: TrainConfig) -> torch.Tensor:
    batch = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).contiguous().float()
    if cfg.normalize_mean is not None:
        mean = torch.tensor(cfg.normalize_mean).view(1, 3, 1, 1)
        std = torch.tensor(cfg.normalize_std).view(1, 3, 1, 1)
        batch = (batch - mean) / std
    return batch


def make_batch(
    samples: list[BiTemporalSample], indices: np.ndarray, cfg: TrainConfig, rng: np.random.Generator
) -> dict[str, torch.Tensor]:
    """Augment the selected samples and assemble label tensors."""
    imgs1, imgs2, grids, expandeds = [], [], [], []
    for idx in indices:
        sample = samples[int(idx)]
        flags = rng.random(3)
        augmented, _ = apply_augmentations(
            sample,
            None,
            hflip=bool(flags[0] < 0.5),
            vflip=bool(flags[1] < 0.5),
            temporal_exchange=bool(flags[2] < 0.5),
        )
        labels = generate_patch_labels(augmented.pixel_mask, cfg.patch_h, cfg.patch_w)
        imgs1.append(augmented.image_t1)
        imgs2.append(augmented.image_t2)
        grids.append(labels.grid.astype(np.float32))
        expandeds.append(labels.expanded.astype(np.float32))
    return {
        "image_t1": _images_to_tensor(imgs1, cfg),
        "image_t2": _images_to_tensor(imgs2, cfg),
        "target_local": torch.from_numpy(np.stack(grids)),
        "expanded": torch.from_numpy(np.stack(expandeds)),
    }


def make_optimizer(model: torch.nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        model.parameters(),
        lr=cfg.base_lr,
        betas=(cfg.beta1, cfg.beta2),
        weight_decay=cfg.weight_decay,
    )


def training_step(
    model: ChangeDetectionNetwork,
    optimizer: torch.optim.Optimizer,
    batch: dict[str, torch.Tensor],
    cfg: TrainConfig,
    iteration: int,
) -> LossBundle:
    lr = poly_learning_rate(iteration, cfg.base_lr, cfg.lr_power, cfg.max_iterations)
    for group in optimizer.param_groups:
        group["lr"] = lr
    outputs = model(batch["image_t1"], batch["image_t2"])
    bundle = compute_total_loss(
        outputs["probabilities"],
        outputs["semantic_maps"],
        batch["target_local"],
        batch["expanded"],
        (cfg.patch_h, cfg.patch_w),
        w_pcl=cfg.w_pcl,
        w_upcl=cfg.w_upcl,
        w_sp=cfg.w_sp,
        upcl_reduction=cfg.upcl_reduction,
        no_pcl=cfg.no_pcl,
        no_upcl=cfg.no_upcl,
        direct_sup=cfg.direct_sup,
    )
    if not torch.isfinite(bundle.total):
        raise FloatingPointError(
            f"non-finite loss at iteration {iteration}: {bundle.detach_values()}"
        )
    optimizer.zero_grad(set_to_none=True)
    bundle.total.backward()
    optimizer.step()
    return bundle


def train(
    cfg: TrainConfig,
    dataset_root: str | Path,
    out_dir: str | Path,
    resume_from: str | Path | None = None,
    stop_after: int | None = None,
    quiet: bool = False,
) -> TrainResult:
    """Run (or resume) the training schedule; `stop_after` emulates an
    interruption at that iteration, checkpointing there."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.yaml")
    log_path = out / "train_log.jsonl"

    samples = load_dataset(dataset_root, "train")
    if not samples:
        raise ValueError(f"no training samples under {dataset_root}")
    for sample in samples:
        if sample.pixel_mask is None:
            raise ValueError(f"sample {sample.id} has no mask to derive patch labels from")
    # early validation metrics are logged for inspection only; the final
    # checkpoint is always the reported model (no selection)
    try:
        val_samples = load_dataset(dataset_root, "val")
    except FileNotFoundError:
        val_samples = []

    torch.manual_seed(cfg.seed)
    model = build_model(cfg)
    optimizer = make_optimizer(model, cfg)

    start_iteration = 0
    if resume_from is not None:
        checkpoint = load_checkpoint(resume_from)
        _check_resume_config(checkpoint, cfg)
        restore_model(checkpoint, model)
        restore_optimizer(checkpoint, optimizer, model)
        start_iteration = checkpoint.iteration

    model.train()
    history: list[dict] = []
    if resume_from is None:
        (out / "val_metrics.jsonl").unlink(missing_ok=True)
    log_fh = open(log_path, "a" if resume_from else "w")
    started = time.time()
    checkpoint_path = out / f"ckpt_{start_iteration:07d}.ckpt"
    last_iteration = cfg.max_iterations if stop_after is None else min(stop_after, cfg.max_iterations)
    try:
        for iteration in range(start_iteration, last_iteration):
            rng = np.random.default_rng([cfg.seed, iteration])
            indices = rng.integers(0, len(samples), cfg.batch_size)
            batch = make_batch(samples, indices, cfg, rng)
            bundle = training_step(model, optimizer, batch, cfg, iteration)

            record = {
                "iteration": iteration,
                "lr": poly_learning_rate(iteration, cfg.base_lr, cfg.lr_power, cfg.max_iterations),
                **bundle.detach_values(),
            }
            history.append(record)
            done = iteration + 1
            if done % cfg.log_every == 0 or done == cfg.max_iterations:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
                if not quiet:
                    rate = (done - start_iteration) / max(time.time() - started, 1e-9)
                    print(
                        f"iter {done}/{cfg.max_iterations} "
                        f"total {record['total']:.4f} pcl {record['pcl']:.4f} "
                        f"upcl {record['upcl']:.4f} ({rate:.1f} it/s)"
                    )
            if done % cfg.checkpoint_every == 0 or done == last_iteration:
                checkpoint_path = out / f"ckpt_{done:07d}.ckpt"
                save_checkpoint(checkpoint_path, model, cfg, done, optimizer)
                if val_samples:
                    from .evaluate import evaluate_model

                    report = evaluate_model(model, val_samples, cfg)
                    model.train()
                    with open(out / "val_metrics.jsonl", "a") as vfh:
                        vfh.write(
                            json.dumps({"iteration": done, **report.to_dict()}) + "\n"
                        )
    finally:
        log_fh.close()
    return TrainResult(
        checkpoint_path=checkpoint_path,
        log_path=log_path,
        history=history,
        final_iteration=last_iteration,
    )


def _check_resume_config(checkpoint: Checkpoint, cfg: TrainConfig) -> None:
    saved = checkpoint.config.to_dict()
    current = cfg.to_dict()
    mismatched = sorted(k for k in saved if saved[k] != current[k])
    if mismatched:
        raise ValueError(
            "cannot resume: config fields differ from checkpoint: "
            + ", ".join(f"{k} ({saved[k]!r} vs {current[k]!r})" for k in mismatched)
        )
