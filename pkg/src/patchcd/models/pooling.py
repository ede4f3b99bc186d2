"""Token-grid pooling used to summarize pixel context for the memory bank."""

from __future__ import annotations

import math
from typing import Sequence

import torch
import torch.nn.functional as F

from .tokens import TokenMap

# Adaptive pooling bin rule (both max and average): output cell i over an
# n-long axis reduced to m cells covers input rows
#   [floor(i * n / m), ceil((i + 1) * n / m)).


def pool_patch_max(token_map: TokenMap, patch_cells: tuple[int, int]) -> torch.Tensor:
    """Channel-wise max over the tokens inside each annotation patch.

    Returns (batch, cells_h * cells_w, channels) in row-major cell order. The
    token grid must subdivide the patch grid exactly.
    """
    cells_h, cells_w = patch_cells
    if cells_h < 1 or cells_w < 1:
        raise ValueError(f"patch cell counts must be positive, got {patch_cells}")
    if token_map.grid_h % cells_h != 0 or token_map.grid_w % cells_w != 0:
        raise ValueError(
            f"token grid {token_map.grid_h}x{token_map.grid_w} does not divide "
            f"into patch cells {cells_h}x{cells_w}"
        )
    pooled = F.adaptive_max_pool2d(token_map.to_grid(), (cells_h, cells_w))
    return TokenMap.from_grid(pooled).tokens


def pool_pyramid_average(
    token_map: TokenMap, ratios: Sequence[int]
) -> list[torch.Tensor]:
    """Adaptive average pooling of the token grid at each downscale ratio.

    Ratio r maps a (gh, gw) grid to ceil(gh / r) x ceil(gw / r) cells, each
    flattened row-major to (batch, n_cells, channels).
    """
    grid = token_map.to_grid()
    pooled = []
    for ratio in ratios:
        if ratio < 1:
            raise ValueError(f"pooling ratios must be positive, got {ratio}")
        out_h = math.ceil(token_map.grid_h / ratio)
        out_w = math.ceil(token_map.grid_w / ratio)
        pooled.append(TokenMap.from_grid(F.adaptive_avg_pool2d(grid, (out_h, out_w))).tokens)
    return pooled
