"""Patch-level supervision losses for the change map and semantic maps.

Predictions are supervised only through the patch grid: a binary
cross-entropy on per-patch maxima classifies each patch as changed or not,
while a consistency term pushes the change map toward zero inside patches
labeled unchanged. Per-block semantic maps reuse the same cross-entropy
kernel.
"""

from __future__ import annotations

import dataclasses

import torch
import torch.nn.functional as F

PROB_EPS = 1e-6  # probability clamp before logs


def local_max_map(values: torch.Tensor, patch_h: int, patch_w: int) -> torch.Tensor:
    """Per-patch maximum of a (batch, H, W) map; differentiable."""
    h, w = values.shape[1], values.shape[2]
    if h % patch_h != 0 or w % patch_w != 0:
        raise ValueError(f"map {h}x{w} does not tile into {patch_h}x{patch_w} patches")
    return F.max_pool2d(values.unsqueeze(1), (patch_h, patch_w)).squeeze(1)


def _binary_cross_entropy(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    p = pred.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p)).mean()


def patch_classification_loss(pred_local: torch.Tensor, target_local: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy between per-patch maxima and patch labels."""
    return _binary_cross_entropy(pred_local, target_local)


def block_semantic_loss(semantic_map: torch.Tensor, target_local: torch.Tensor) -> torch.Tensor:
    """Same cross-entropy kernel, applied to one block's semantic map."""
    return _binary_cross_entropy(semantic_map, target_local)


def _check_block_constant(labels: torch.Tensor, patch_h: int, patch_w: int) -> None:
    grid = local_max_map(labels, patch_h, patch_w)
    rebuilt = grid.repeat_interleave(patch_h, dim=1).repeat_interleave(patch_w, dim=2)
    if not torch.equal(rebuilt, labels):
        raise ValueError(
            f"expanded labels are not block-constant over the "
            f"{patch_h}x{patch_w} patch grid"
        )


def unchanged_consistency_loss(
    change_map: torch.Tensor,
    expanded_labels: torch.Tensor,
    patch_hw: tuple[int, int] | None = None,
    reduction: str = "mean",
) -> torch.Tensor:
    """L1 penalty on predictions inside patches labeled unchanged.

    Pixels of changed patches contribute nothing (and receive no gradient
    from this term). `reduction="mean"` divides by the total pixel count so
    the scale is independent of image and patch size; "sum" keeps the raw
    accumulation. When `patch_hw` is given the labels are verified to be
    block-constant, guarding against corrupted expansions.
    """
    if change_map.shape != expanded_labels.shape:
        raise ValueError(
            f"shape mismatch: change map {tuple(change_map.shape)} vs labels "
            f"{tuple(expanded_labels.shape)}"
        )
    if patch_hw is not None:
        _check_block_constant(expanded_labels, patch_hw[0], patch_hw[1])
    residual = ((1.0 - expanded_labels) * (change_map - expanded_labels)).abs()
    if reduction == "mean":
        return residual.mean()
    if reduction == "sum":
        return residual.sum()
    raise ValueError(f"unknown reduction {reduction!r}")


def direct_supervision_loss(change_map: torch.Tensor, expanded_labels: torch.Tensor) -> torch.Tensor:
    """Plain pixel-wise BCE against the block-constant labels (baseline)."""
    return _binary_cross_entropy(change_map, expanded_labels)


@dataclasses.dataclass
class LossBundle:
    """Loss components (already weighted); total is their plain sum."""

    pcl: torch.Tensor
    upcl: torch.Tensor
    sp: list[torch.Tensor]
    direct: torch.Tensor
    total: torch.Tensor

    def detach_values(self) -> dict[str, float]:
        return {
            "pcl": float(self.pcl.detach()),
            "upcl": float(self.upcl.detach()),
            "sp": [float(v.detach()) for v in self.sp],
            "direct": float(self.direct.detach()),
            "total": float(self.total.detach()),
        }


def compute_total_loss(
    change_map: torch.Tensor,
    semantic_maps: list[torch.Tensor],
    target_local: torch.Tensor,
    expanded_labels: torch.Tensor,
    patch_hw: tuple[int, int],
    w_pcl: float = 1.0,
    w_upcl: float = 1.0,
    w_sp: float = 1.0,
    upcl_reduction: str = "mean",
    no_pcl: bool = False,
    no_upcl: bool = False,
    direct_sup: bool = False,
) -> LossBundle:
    """Assemble the training loss; disabled terms contribute exactly zero.

    With `direct_sup=True` the patch supervision scheme is replaced outright
    by pixel-wise BCE against the expanded labels.
    """
    zero = change_map.new_zeros(())
    if direct_sup:
        direct = direct_supervision_loss(change_map, expanded_labels)
        return LossBundle(pcl=zero, upcl=zero, sp=[], direct=direct, total=direct)

    pred_local = local_max_map(change_map, patch_hw[0], patch_hw[1])
    pcl = zero if no_pcl else w_pcl * patch_classification_loss(pred_local, target_local)
    upcl = (
        zero
        if no_upcl
        else w_upcl
        * unchanged_consistency_loss(
            change_map, expanded_labels, patch_hw, reduction=upcl_reduction
        )
    )
    sp = [w_sp * block_semantic_loss(q, target_local) for q in semantic_maps]
    total = pcl + upcl
    for term in sp:
        total = total + term
    return LossBundle(pcl=pcl, upcl=upcl, sp=sp, direct=zero, total=total)
