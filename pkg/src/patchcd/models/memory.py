"""Memory-bank transformer: prototype bank plus bi-directional attention blocks.

Each block couples the token stream with a bank of learned change prototypes:
pooled token context is appended to the bank and attended into the prototypes
(pixel-to-memory), then the enriched prototypes are attended back into the
tokens (memory-to-pixel). One feed-forward sublayer follows each attention
sublayer. The bank itself is a learnable parameter; within a forward pass the
per-block prototype updates are transient, and the persistent dataset-level
prototypes are learned by gradient descent on the initial bank.
"""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn

from .attention import CrossAttention, FeedForward
from .pooling import pool_patch_max, pool_pyramid_average
from .tokens import TokenMap

MEMORY_INIT_STD = 0.02


def init_memory_prototypes(num_prototypes: int, channels: int, seed: int = 0) -> torch.Tensor:
    """Zero-mean, small-variance prototype bank; deterministic per seed."""
    if num_prototypes < 1:
        raise ValueError(f"need at least one memory prototype, got {num_prototypes}")
    generator = torch.Generator().manual_seed(seed)
    return torch.normal(
        0.0, MEMORY_INIT_STD, (num_prototypes, channels), generator=generator
    )


class BidirectionalAttentionBlock(nn.Module):
    """One transformer block exchanging context between tokens and prototypes.

    Sublayer order: pool -> augment -> pixel-to-memory attention -> FFN ->
    memory-to-pixel attention -> FFN. The block also emits a per-patch
    semantic map predicted from the pooled max tokens, used as auxiliary
    supervision.

    Ablation switches: `use_p2m=False` swaps the pixel-to-memory cross
    attention for plain self-attention over the prototypes alone;
    `use_max_rows` / `use_pyramid_rows` drop the corresponding pooled rows
    from the augmented bank.
    """

    def __init__(
        self,
        channels: int,
        pooling_ratios: Sequence[int],
        block_index: int = 0,
        num_heads: int = 1,
        pre_norm: bool = True,
        use_p2m: bool = True,
        use_max_rows: bool = True,
        use_pyramid_rows: bool = True,
    ):
        super().__init__()
        self.block_index = block_index
        self.pooling_ratios = tuple(pooling_ratios)
        self.use_p2m = use_p2m
        self.use_max_rows = use_max_rows
        self.use_pyramid_rows = use_pyramid_rows
        self.pixel_to_memory = CrossAttention(channels, num_heads, pre_norm)
        self.memory_ffn = FeedForward(channels, pre_norm=pre_norm)
        self.memory_to_pixel = CrossAttention(channels, num_heads, pre_norm)
        self.token_ffn = FeedForward(channels, pre_norm=pre_norm)
        self.max_row_proj = nn.Linear(channels, channels)
        self.pyramid_row_projs = nn.ModuleList(
            [nn.Linear(channels, channels) for _ in self.pooling_ratios]
        )
        self.semantic_head = nn.Linear(channels, 1)

    def augmented_memory(
        self,
        memory: torch.Tensor,
        pooled_max: torch.Tensor,
        pooled_pyramid: Sequence[torch.Tensor],
    ) -> torch.Tensor:
        """Concatenate the bank with projected pooled rows, bank rows first."""
        if pooled_max.shape[-1] != memory.shape[-1]:
            raise ValueError(
                f"channel mismatch: memory {memory.shape[-1]} vs pooled "
                f"{pooled_max.shape[-1]}"
            )
        rows = [memory]
        if self.use_max_rows:
            rows.append(self.max_row_proj(pooled_max))
        if self.use_pyramid_rows:
            rows.extend(
                proj(tokens)
                for proj, tokens in zip(self.pyramid_row_projs, pooled_pyramid)
            )
        return torch.cat(rows, dim=1)

    def forward(
        self,
        token_map: TokenMap,
        memory: torch.Tensor,
        patch_cells: tuple[int, int],
    ) -> tuple[TokenMap, torch.Tensor, torch.Tensor]:
        pooled_max = pool_patch_max(token_map, patch_cells)
        pooled_pyramid = pool_pyramid_average(token_map, self.pooling_ratios)
        semantic = torch.sigmoid(self.semantic_head(pooled_max)).squeeze(-1)
        semantic = semantic.reshape(-1, patch_cells[0], patch_cells[1])

        if self.use_p2m:
            context = self.augmented_memory(memory, pooled_max, pooled_pyramid)
        else:
            context = memory
        memory = self.pixel_to_memory(memory, context)
        memory = self.memory_ffn(memory)
        tokens = self.memory_to_pixel(token_map.tokens, memory)
        tokens = self.token_ffn(tokens)

        if not torch.isfinite(tokens).all() or not torch.isfinite(memory).all():
            raise FloatingPointError(
                f"non-finite values in attention block {self.block_index}"
            )
        return (
            TokenMap(tokens=tokens, grid_h=token_map.grid_h, grid_w=token_map.grid_w),
            memory,
            semantic,
        )


class MemoryTransformer(nn.Module):
    """A stack of bi-directional attention blocks over a learnable bank."""

    def __init__(
        self,
        channels: int,
        num_prototypes: int,
        num_blocks: int,
        pooling_ratios: Sequence[int],
        seed: int = 0,
        num_heads: int = 1,
        pre_norm: bool = True,
        use_p2m: bool = True,
        use_max_rows: bool = True,
        use_pyramid_rows: bool = True,
    ):
        super().__init__()
        if num_blocks < 1:
            raise ValueError(f"need at least one attention block, got {num_blocks}")
        self.prototypes = nn.Parameter(
            init_memory_prototypes(num_prototypes, channels, seed)
        )
        self.blocks = nn.ModuleList(
            [
                BidirectionalAttentionBlock(
                    channels,
                    pooling_ratios,
                    block_index=s,
                    num_heads=num_heads,
                    pre_norm=pre_norm,
                    use_p2m=use_p2m,
                    use_max_rows=use_max_rows,
                    use_pyramid_rows=use_pyramid_rows,
                )
                for s in range(num_blocks)
            ]
        )

    def forward(
        self,
        token_map: TokenMap,
        patch_cells: tuple[int, int],
        bypass: bool = False,
    ) -> tuple[TokenMap, list[torch.Tensor]]:
        """Thread tokens and prototypes through the stack.

        With `bypass=True` (the no-attention-stack ablation) the tokens pass
        through unchanged and no semantic maps are produced.
        """
        if bypass:
            return token_map, []
        batch = token_map.tokens.shape[0]
        memory = self.prototypes.unsqueeze(0).expand(batch, -1, -1)
        semantic_maps = []
        for block in self.blocks:
            token_map, memory, semantic = block(token_map, memory, patch_cells)
            semantic_maps.append(semantic)
        return token_map, semantic_maps
