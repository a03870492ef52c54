"""Token encoder: per-feature embedding tables plus an output projection."""

from __future__ import annotations

import math

import torch
from torch import nn

from ..errors import UsageError


def _uniform(shape, bound, generator, dtype):
    return (torch.rand(shape, generator=generator, dtype=dtype) * 2 - 1) * bound


def glorot(shape, generator, dtype):
    bound = math.sqrt(6.0 / (shape[0] + shape[1]))
    return _uniform(shape, bound, generator, dtype)


class TokenEncoder(nn.Module):
    """Selects one embedding row per feature, concatenates, and projects to ``dim``.

    Each of the K feature tables has shape (width_k, dim); the concatenated
    K*dim vector is mapped back to ``dim`` by a learnable projection so every
    stage of a pipeline works at one representation width.
    """

    def __init__(self, widths: list[int], dim: int = 128, seed: int = 0, dtype=torch.float32):
        super().__init__()
        if not widths:
            raise UsageError("token encoder needs at least one feature")
        gen = torch.Generator().manual_seed(seed)
        bound = 1.0 / math.sqrt(dim)
        self.widths = list(widths)
        self.dim = dim
        self.tables = nn.ParameterList(
            nn.Parameter(_uniform((w, dim), bound, gen, dtype)) for w in widths
        )
        self.projection = nn.Parameter(glorot((len(widths) * dim, dim), gen, dtype))

    def concat_blocks(self, blocks: torch.Tensor) -> torch.Tensor:
        """Explicit one-hot path: blocks (..., sum widths) -> (..., K*dim)."""
        if blocks.shape[-1] != sum(self.widths):
            raise UsageError(
                f"block length {blocks.shape[-1]} does not match codec widths (sum {sum(self.widths)})"
            )
        parts = []
        offset = 0
        for w, table in zip(self.widths, self.tables):
            parts.append(blocks[..., offset : offset + w] @ table)
            offset += w
        return torch.cat(parts, dim=-1)

    def embed_indices(self, idx: torch.Tensor) -> torch.Tensor:
        """Index path: idx (..., K) long -> (..., K*dim); row selection per feature."""
        if idx.shape[-1] != len(self.widths):
            raise UsageError(f"expected {len(self.widths)} feature indices, got {idx.shape[-1]}")
        parts = [table[idx[..., k]] for k, table in enumerate(self.tables)]
        return torch.cat(parts, dim=-1)

    def forward(self, idx: torch.Tensor) -> torch.Tensor:
        return self.embed_indices(idx) @ self.projection

    def forward_blocks(self, blocks: torch.Tensor) -> torch.Tensor:
        return self.concat_blocks(blocks) @ self.projection


def token_encode(encoder: TokenEncoder, blocks: torch.Tensor) -> torch.Tensor:
    """Concatenation of selected embedding rows (no projection applied)."""
    return encoder.concat_blocks(blocks)
