"""Pyramid decoder fusing the multi-level difference features into one token map."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .tokens import TokenMap


def _upsample_to(x: torch.Tensor, size) -> torch.Tensor:
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class PyramidDecoder(nn.Module):
    """Top-down pathway with lateral 1x1 projections and a summed final merge.

    Deeper levels are upsampled and added onto the lateral projection of the
    level above; all refined levels are then upsampled to the finest pyramid
    resolution, summed, and the merge is upsampled once more so the output
    grid sits at stride 4 of the input image.
    """

    def __init__(self, in_channels=(64, 128, 256, 512), channels: int = 128):
        super().__init__()
        self.channels = channels
        self.laterals = nn.ModuleList(
            [nn.Conv2d(ch, channels, 1) for ch in in_channels]
        )
        self.smooth = nn.ModuleList(
            [nn.Conv2d(channels, channels, 3, padding=1) for _ in in_channels]
        )
        self.fuse = nn.Conv2d(channels, channels, 3, padding=1)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, difference_levels: list[torch.Tensor]) -> TokenMap:
        if len(difference_levels) != len(self.laterals):
            raise ValueError(
                f"expected {len(self.laterals)} pyramid levels, "
                f"got {len(difference_levels)}"
            )
        laterals = [lat(x) for lat, x in zip(self.laterals, difference_levels)]
        merged = [laterals[-1]]
        for lateral in reversed(laterals[:-1]):
            merged.append(lateral + _upsample_to(merged[-1], lateral.shape[2:]))
        merged = merged[::-1]  # finest first
        refined = [self.relu(conv(x)) for conv, x in zip(self.smooth, merged)]

        finest = refined[0].shape[2:]
        total = refined[0]
        for level in refined[1:]:
            total = total + _upsample_to(level, finest)
        fused = self.relu(self.fuse(total))
        out = _upsample_to(fused, (finest[0] * 2, finest[1] * 2))  # stride 8 -> 4
        return TokenMap.from_grid(out)
