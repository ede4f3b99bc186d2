"""Training configuration: declarative YAML file, overridable by CLI flags."""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

import yaml


@dataclasses.dataclass
class TrainConfig:
    # annotation granularity
    patch_h: int = 32
    patch_w: int = 32

    # architecture
    channels: int = 128           # decoder/transformer width
    num_prototypes: int = 128     # memory bank length
    num_blocks: int = 3           # attention blocks in the stack
    pooling_ratios: list[int] = dataclasses.field(default_factory=lambda: [12, 16, 20, 24])
    num_heads: int = 1
    pre_norm: bool = True
    pretrained_backbone: str | None = None  # optional checkpoint file for encoder weights

    # optimization; the Adam moment decay doubles as the "momentum" of the
    # schedule, so beta1 carries both roles
    base_lr: float = 0.0005
    lr_power: float = 0.9
    max_iterations: int = 40000
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 0.0001
    seed: int = 0

    # loss weights and variants
    w_pcl: float = 1.0            # patch classification term
    w_upcl: float = 1.0           # unchanged-patch consistency term
    w_sp: float = 1.0             # per-block semantic term
    upcl_reduction: str = "mean"  # "mean" keeps the term scale size-independent

    # ablation switches
    no_bab: bool = False          # bypass the attention stack entirely
    no_p2m: bool = False          # prototypes self-attend instead of reading pooled rows
    no_mp: bool = False           # drop max-pooled rows from the augmented bank
    no_ap: bool = False           # drop pyramid-pooled rows from the augmented bank
    no_pcl: bool = False          # drop the patch classification loss
    no_upcl: bool = False         # drop the unchanged-patch consistency loss
    direct_sup: bool = False      # supervise the change map directly with expanded labels

    # evaluation / data handling
    threshold: float = 0.5
    normalize_mean: list[float] | None = None  # optional per-channel normalization
    normalize_std: list[float] | None = None

    # bookkeeping
    checkpoint_every: int = 1000
    log_every: int = 50

    def validate(self) -> "TrainConfig":
        if self.patch_h < 1 or self.patch_w < 1:
            raise ValueError(f"patch size must be positive, got {self.patch_h}x{self.patch_w}")
        if self.num_prototypes < 1:
            raise ValueError(f"num_prototypes must be >= 1, got {self.num_prototypes}")
        if self.num_blocks < 1:
            raise ValueError(f"num_blocks must be >= 1, got {self.num_blocks}")
        if self.channels < self.num_heads or self.channels % self.num_heads != 0:
            raise ValueError(
                f"channels {self.channels} must be divisible by num_heads {self.num_heads}"
            )
        if any(r < 1 for r in self.pooling_ratios):
            raise ValueError(f"pooling ratios must be positive, got {self.pooling_ratios}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.upcl_reduction not in ("mean", "sum"):
            raise ValueError(f"upcl_reduction must be 'mean' or 'sum', got {self.upcl_reduction}")
        for name in ("normalize_mean", "normalize_std"):
            value = getattr(self, name)
            if value is not None and len(value) != 3:
                raise ValueError(f"{name} must have 3 entries, got {value}")
        if (self.normalize_mean is None) != (self.normalize_std is None):
            raise ValueError("normalize_mean and normalize_std must be set together")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values).validate()

    def with_overrides(self, overrides: dict[str, Any]) -> "TrainConfig":
        merged = self.to_dict()
        merged.update(overrides)
        return type(self).from_dict(merged)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)
        )

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        values = yaml.safe_load(Path(path).read_text())
        if not isinstance(values, dict):
            raise ValueError(f"config file {path} must hold a mapping")
        return cls.from_dict(values)


# Variant names accepted by the sweep command, mapped onto config switches.
ABLATION_VARIANTS: dict[str, dict[str, Any]] = {
    "default": {},
    "no_bab": {"no_bab": True},
    "nm_64": {"num_prototypes": 64},
    "nm_192": {"num_prototypes": 192},
    "no_p2m": {"no_p2m": True},
    "no_mp": {"no_mp": True},
    "no_ap": {"no_ap": True},
    "no_upcl": {"no_upcl": True},
    "no_pcl": {"no_pcl": True},
    "direct_sup": {"direct_sup": True},
}
