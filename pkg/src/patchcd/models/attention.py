"""Cross-attention and feed-forward sublayers for the memory transformer."""

from __future__ import annotations

import math

import torch
import torch.nn as nn


class CrossAttention(nn.Module):
    """Scaled dot-product cross-attention with a residual output projection.

    Queries come from the residual stream `x`; keys and values from `context`.
    With `context = x` this degrades to plain self-attention. Pre-norm, when
    enabled, is applied inside the sublayer so the residual path stays
    untouched: zeroing the output projection makes the layer the identity.
    """

    def __init__(self, channels: int, num_heads: int = 1, pre_norm: bool = True):
        super().__init__()
        if channels % num_heads != 0:
            raise ValueError(f"channels {channels} not divisible by heads {num_heads}")
        self.channels = channels
        self.num_heads = num_heads
        self.w_q = nn.Linear(channels, channels)
        self.w_k = nn.Linear(channels, channels)
        self.w_v = nn.Linear(channels, channels)
        self.w_o = nn.Linear(channels, channels)
        self.norm_q = nn.LayerNorm(channels) if pre_norm else None
        self.norm_kv = nn.LayerNorm(channels) if pre_norm else None

    def _split_heads(self, t: torch.Tensor) -> torch.Tensor:
        b, n, _ = t.shape
        return t.reshape(b, n, self.num_heads, -1).transpose(1, 2)

    def forward(
        self,
        x: torch.Tensor,
        context: torch.Tensor,
        return_weights: bool = False,
    ):
        q_in = self.norm_q(x) if self.norm_q is not None else x
        kv_in = self.norm_kv(context) if self.norm_kv is not None else context
        q = self._split_heads(self.w_q(q_in))
        k = self._split_heads(self.w_k(kv_in))
        v = self._split_heads(self.w_v(kv_in))

        scale = 1.0 / math.sqrt(q.shape[-1])
        weights = torch.softmax(q @ k.transpose(-2, -1) * scale, dim=-1)
        out = weights @ v
        out = out.transpose(1, 2).reshape(x.shape[0], x.shape[1], self.channels)
        out = x + self.w_o(out)
        if return_weights:
            return out, weights
        return out


class FeedForward(nn.Module):
    """Per-token expansion/projection MLP with residual add."""

    def __init__(self, channels: int, expansion: int = 4, pre_norm: bool = True):
        super().__init__()
        self.fc1 = nn.Linear(channels, channels * expansion)
        self.fc2 = nn.Linear(channels * expansion, channels)
        self.act = nn.GELU()
        self.norm = nn.LayerNorm(channels) if pre_norm else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm(x) if self.norm is not None else x
        return x + self.fc2(self.act(self.fc1(h)))
