"""Spatially indexed feature tokens shared by the decoder and the transformer."""

from __future__ import annotations

import dataclasses

import torch


@dataclasses.dataclass
class TokenMap:
    """A (batch, grid_h * grid_w, channels) token tensor in row-major grid order.

    tokens[b, r * grid_w + c] is the feature at grid cell (r, c); `to_grid` and
    `from_grid` are exact inverses of each other.
    """

    tokens: torch.Tensor
    grid_h: int
    grid_w: int

    def __post_init__(self):
        if self.tokens.ndim != 3:
            raise ValueError(f"tokens must be (batch, n, channels), got {tuple(self.tokens.shape)}")
        if self.tokens.shape[1] != self.grid_h * self.grid_w:
            raise ValueError(
                f"token count {self.tokens.shape[1]} does not match grid "
                f"{self.grid_h}x{self.grid_w}"
            )

    @property
    def channels(self) -> int:
        return self.tokens.shape[2]

    def to_grid(self) -> torch.Tensor:
        """Reshape to (batch, channels, grid_h, grid_w)."""
        b, _, c = self.tokens.shape
        return self.tokens.transpose(1, 2).reshape(b, c, self.grid_h, self.grid_w)

    @classmethod
    def from_grid(cls, grid: torch.Tensor) -> "TokenMap":
        """Flatten a (batch, channels, h, w) map into row-major tokens."""
        b, c, h, w = grid.shape
        return cls(tokens=grid.reshape(b, c, h * w).transpose(1, 2), grid_h=h, grid_w=w)
