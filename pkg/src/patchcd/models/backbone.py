"""Shared-weight residual encoder and temporal feature differencing.

One parameter set serves both temporal images: callers simply run the same
module twice, so weight sharing holds by construction. The encoder emits a
four-level pyramid at strides 8/16/32/64 with channels (64, 128, 256, 512).
"""

from __future__ import annotations

import torch
import torch.nn as nn

STAGE_CHANNELS = (64, 128, 256, 512)
STRIDES = (8, 16, 32, 64)


def conv3x3(in_ch: int, out_ch: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)


class BasicBlock(nn.Module):
    """Two 3x3 convolutions with a residual connection."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = conv3x3(in_ch, out_ch, stride)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = conv3x3(out_ch, out_ch)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class ResidualEncoder(nn.Module):
    """Stride-4 stem plus four two-block stages, each halving resolution."""

    def __init__(self, in_channels: int = 3, stage_channels=STAGE_CHANNELS):
        super().__init__()
        self.stage_channels = tuple(stage_channels)
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, stage_channels[0], 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(stage_channels[0]),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        stages = []
        prev = stage_channels[0]
        for ch in stage_channels:
            stages.append(
                nn.Sequential(BasicBlock(prev, ch, stride=2), BasicBlock(ch, ch))
            )
            prev = ch
        self.stages = nn.ModuleList(stages)

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        """Return the four pyramid levels, finest first."""
        if image.ndim != 4 or image.shape[1] != self.stem[0].in_channels:
            raise ValueError(
                f"expected (batch, {self.stem[0].in_channels}, H, W) input, "
                f"got {tuple(image.shape)}"
            )
        h, w = image.shape[2], image.shape[3]
        if h % STRIDES[-1] != 0 or w % STRIDES[-1] != 0:
            raise ValueError(
                f"input size {h}x{w} must be divisible by {STRIDES[-1]} "
                f"(the deepest stride)"
            )
        x = self.stem(image)
        levels = []
        for stage in self.stages:
            x = stage(x)
            levels.append(x)
        return levels


def temporal_difference(
    features_t1: list[torch.Tensor], features_t2: list[torch.Tensor]
) -> list[torch.Tensor]:
    """Signed element-wise difference of two feature pyramids."""
    if len(features_t1) != len(features_t2):
        raise ValueError(
            f"pyramids have different depth: {len(features_t1)} vs {len(features_t2)}"
        )
    diffs = []
    for i, (a, b) in enumerate(zip(features_t1, features_t2)):
        if a.shape != b.shape:
            raise ValueError(
                f"level {i} shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}"
            )
        diffs.append(a - b)
    return diffs
