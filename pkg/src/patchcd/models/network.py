"""Full change-detection network: encoder, decoder, memory transformer, head."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import TrainConfig
from .backbone import ResidualEncoder, temporal_difference
from .decoder import PyramidDecoder
from .memory import MemoryTransformer
from .tokens import TokenMap

OUTPUT_STRIDE = 4


class ChangeMapHead(nn.Module):
    """1x1 convolution to one channel, sigmoid, then x4 bilinear upsampling."""

    def __init__(self, channels: int):
        super().__init__()
        self.proj = nn.Conv2d(channels, 1, 1)

    def forward(self, token_map: TokenMap, out_hw: tuple[int, int]) -> torch.Tensor:
        out_h, out_w = out_hw
        if (token_map.grid_h, token_map.grid_w) != (out_h // OUTPUT_STRIDE, out_w // OUTPUT_STRIDE):
            raise ValueError(
                f"token grid {token_map.grid_h}x{token_map.grid_w} does not match "
                f"output size {out_h}x{out_w} at stride {OUTPUT_STRIDE}"
            )
        prob = torch.sigmoid(self.proj(token_map.to_grid()))
        prob = F.interpolate(prob, size=(out_h, out_w), mode="bilinear", align_corners=False)
        return prob.squeeze(1)


class ChangeDetectionNetwork(nn.Module):
    """Weakly supervised change detector over a registered image pair.

    The same encoder instance embeds both temporal images (weight sharing by
    construction); their feature pyramids are subtracted element-wise, decoded
    into a stride-4 token map, refined by the memory transformer, and mapped
    to per-pixel change probabilities.
    """

    def __init__(
        self,
        patch_h: int,
        patch_w: int,
        channels: int = 128,
        num_prototypes: int = 128,
        num_blocks: int = 3,
        pooling_ratios=(12, 16, 20, 24),
        num_heads: int = 1,
        pre_norm: bool = True,
        seed: int = 0,
        no_bab: bool = False,
        no_p2m: bool = False,
        no_mp: bool = False,
        no_ap: bool = False,
    ):
        super().__init__()
        self.patch_h = patch_h
        self.patch_w = patch_w
        self.no_bab = no_bab
        self.encoder = ResidualEncoder()
        self.decoder = PyramidDecoder(self.encoder.stage_channels, channels)
        self.transformer = MemoryTransformer(
            channels,
            num_prototypes,
            num_blocks,
            pooling_ratios,
            seed=seed,
            num_heads=num_heads,
            pre_norm=pre_norm,
            use_p2m=not no_p2m,
            use_max_rows=not no_mp,
            use_pyramid_rows=not no_ap,
        )
        self.head = ChangeMapHead(channels)

    def patch_cells(self, height: int, width: int) -> tuple[int, int]:
        if height % self.patch_h != 0 or width % self.patch_w != 0:
            raise ValueError(
                f"image {height}x{width} does not tile into "
                f"{self.patch_h}x{self.patch_w} patches"
            )
        return height // self.patch_h, width // self.patch_w

    def forward(self, image_t1: torch.Tensor, image_t2: torch.Tensor) -> dict:
        """Return per-pixel change probabilities plus per-block semantic maps."""
        if image_t1.shape != image_t2.shape:
            raise ValueError(
                f"temporal images disagree in shape: "
                f"{tuple(image_t1.shape)} vs {tuple(image_t2.shape)}"
            )
        height, width = image_t1.shape[2], image_t1.shape[3]
        cells = self.patch_cells(height, width)
        diffs = temporal_difference(self.encoder(image_t1), self.encoder(image_t2))
        tokens = self.decoder(diffs)
        tokens, semantic_maps = self.transformer(tokens, cells, bypass=self.no_bab)
        probabilities = self.head(tokens, (height, width))
        return {
            "probabilities": probabilities,   # (batch, H, W) in (0, 1)
            "semantic_maps": semantic_maps,   # per block, (batch, H/ph, W/pw)
            "tokens": tokens,
        }


def build_model(cfg: TrainConfig) -> ChangeDetectionNetwork:
    cfg.validate()
    model = ChangeDetectionNetwork(
        patch_h=cfg.patch_h,
        patch_w=cfg.patch_w,
        channels=cfg.channels,
        num_prototypes=cfg.num_prototypes,
        num_blocks=cfg.num_blocks,
        pooling_ratios=tuple(cfg.pooling_ratios),
        num_heads=cfg.num_heads,
        pre_norm=cfg.pre_norm,
        seed=cfg.seed,
        no_bab=cfg.no_bab,
        no_p2m=cfg.no_p2m,
        no_mp=cfg.no_mp,
        no_ap=cfg.no_ap,
    )
    if cfg.pretrained_backbone:
        from ..checkpoint import load_backbone_weights

        load_backbone_weights(cfg.pretrained_backbone, model)
    return model
