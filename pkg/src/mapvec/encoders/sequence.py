"""Sequence encoders over trajectory representations: attention and recurrent.

Both variants add learnable position and time-of-day slot embeddings to the
inputs before the first layer and emit one vector per input position.
"""

from __future__ import annotations

import math
from datetime import datetime

import torch
from torch import nn

from ..errors import UsageError
from .token import _uniform, glorot

SECONDS_PER_DAY = 86_400


def slot_of_timestamp(t: datetime, slots: int = 48) -> int:
    """Index of the time-of-day slot containing ``t`` (UTC)."""
    sod = t.hour * 3600 + t.minute * 60 + t.second
    return sod * slots // SECONDS_PER_DAY


class SequenceEncoder(nn.Module):
    """Per-position trajectory encoder.

    ``arch`` selects multi-head self-attention blocks (bidirectional unless a
    causal mask is requested) or a stacked GRU (always causal). Inputs are
    padded to a common length; ``lengths`` marks the valid prefix of each row.
    """

    def __init__(
        self,
        dim: int = 128,
        arch: str = "attention",
        layers: int = 2,
        heads: int = 4,
        hidden: int = 256,
        max_len: int = 128,
        time_slots: int = 48,
        seed: int = 0,
        dtype=torch.float32,
    ):
        super().__init__()
        if arch not in ("attention", "recurrent"):
            raise UsageError(f"unknown sequence architecture {arch!r}")
        if arch == "attention" and dim % heads != 0:
            raise UsageError(f"dim {dim} must be divisible by head count {heads}")
        gen = torch.Generator().manual_seed(seed)
        self.dim = dim
        self.arch = arch
        self.heads = heads
        self.max_len = max_len
        self.time_slots = time_slots
        bound = 1.0 / math.sqrt(dim)
        self.position_table = nn.Parameter(_uniform((max_len, dim), bound, gen, dtype))
        self.slot_table = nn.Parameter(_uniform((time_slots, dim), bound, gen, dtype))

        if arch == "attention":
            self.blocks = nn.ModuleList(_AttentionBlock(dim, heads, hidden, gen, dtype) for _ in range(layers))
        else:
            self.gru = nn.GRU(input_size=dim, hidden_size=hidden, num_layers=layers, batch_first=True)
            for p in self.gru.parameters():
                with torch.no_grad():
                    p.copy_(_uniform(p.shape, 1.0 / math.sqrt(hidden), gen, dtype))
            if dtype == torch.float64:
                self.gru.double()
            self.out_proj = nn.Parameter(glorot((hidden, dim), gen, dtype))

    def time_embed(self, t: datetime) -> torch.Tensor:
        """Learnable embedding row for the slot containing ``t``."""
        return self.slot_table[slot_of_timestamp(t, self.time_slots)]

    def forward(
        self,
        reps: torch.Tensor,
        slots: torch.Tensor | None = None,
        lengths: torch.Tensor | None = None,
        causal: bool | None = None,
    ) -> torch.Tensor:
        """reps (B, K, dim) or (K, dim) -> same shape, one output per position."""
        squeeze = reps.dim() == 2
        if squeeze:
            reps = reps.unsqueeze(0)
            if slots is not None:
                slots = slots.unsqueeze(0)
        b, k, _ = reps.shape
        if k > self.max_len:
            raise UsageError(f"sequence length {k} exceeds maximum {self.max_len}; truncate first")

        x = reps + self.position_table[:k]
        if slots is not None:
            x = x + self.slot_table[slots]

        if self.arch == "recurrent":
            out, _ = self.gru(x)
            out = out @ self.out_proj
        else:
            causal = bool(causal)
            mask = self._attention_mask(b, k, lengths, causal, x.dtype, x.device)
            out = x
            for block in self.blocks:
                out = block(out, mask)
        return out.squeeze(0) if squeeze else out

    def _attention_mask(self, b, k, lengths, causal, dtype, device):
        mask = torch.zeros((b, 1, k, k), dtype=dtype, device=device)
        if causal:
            upper = torch.triu(torch.ones(k, k, dtype=torch.bool, device=device), diagonal=1)
            mask = mask.masked_fill(upper, float("-inf"))
        if lengths is not None:
            key_pad = torch.arange(k, device=device).unsqueeze(0) >= lengths.unsqueeze(1)  # (B, K)
            mask = mask.masked_fill(key_pad[:, None, None, :], float("-inf"))
        return mask


class _AttentionBlock(nn.Module):
    """Pre-norm transformer block with hand-rolled multi-head attention."""

    def __init__(self, dim, heads, hidden, gen, dtype):
        super().__init__()
        self.heads = heads
        self.dh = dim // heads
        self.wq = nn.Parameter(glorot((dim, dim), gen, dtype))
        self.wk = nn.Parameter(glorot((dim, dim), gen, dtype))
        self.wv = nn.Parameter(glorot((dim, dim), gen, dtype))
        self.wo = nn.Parameter(glorot((dim, dim), gen, dtype))
        self.ff1 = nn.Parameter(glorot((dim, hidden), gen, dtype))
        self.ff1_b = nn.Parameter(torch.zeros(hidden, dtype=dtype))
        self.ff2 = nn.Parameter(glorot((hidden, dim), gen, dtype))
        self.ff2_b = nn.Parameter(torch.zeros(dim, dtype=dtype))
        self.norm1 = nn.LayerNorm(dim, dtype=dtype)
        self.norm2 = nn.LayerNorm(dim, dtype=dtype)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        b, k, dim = x.shape
        y = self.norm1(x)
        q = (y @ self.wq).view(b, k, self.heads, self.dh).transpose(1, 2)
        kk = (y @ self.wk).view(b, k, self.heads, self.dh).transpose(1, 2)
        v = (y @ self.wv).view(b, k, self.heads, self.dh).transpose(1, 2)
        scores = q @ kk.transpose(-1, -2) / math.sqrt(self.dh) + mask
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(b, k, dim)
        x = x + ctx @ self.wo
        y = self.norm2(x)
        x = x + (torch.relu(y @ self.ff1 + self.ff1_b) @ self.ff2 + self.ff2_b)
        return x


def seq_encode(
    encoder: SequenceEncoder,
    traj_reps: torch.Tensor,
    timestamps: list[datetime] | None = None,
    causal: bool | None = None,
) -> torch.Tensor:
    """Encode one trajectory's (K, dim) representations with aligned timestamps."""
    slots = None
    if timestamps is not None:
        if len(timestamps) != traj_reps.shape[0]:
            raise UsageError("timestamps are not aligned with positions")
        slots = torch.tensor([slot_of_timestamp(t, encoder.time_slots) for t in timestamps])
    return encoder(traj_reps, slots=slots, causal=causal)
