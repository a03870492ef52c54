"""Task heads holding the learnable parameters of pretraining objectives."""

from __future__ import annotations

import torch
from torch import nn

from ..encoders.codec import CategoricalScheme, FeatureCodec
from ..encoders.token import _uniform, glorot
from ..errors import UsageError

PRETRAIN_TASKS = ("tokri", "trcl", "atocl", "nfi", "gau", "ncl", "agcl", "trajp", "mtr", "atrcl")

TASK_STAGE = {
    "tokri": "token",
    "trcl": "token",
    "atocl": "token",
    "nfi": "graph",
    "gau": "graph",
    "ncl": "graph",
    "agcl": "graph",
    "trajp": "sequence",
    "mtr": "sequence",
    "atrcl": "sequence",
}


class PairScorer(nn.Module):
    """Two-layer perceptron scoring a pair of representations to one logit."""

    def __init__(self, dim: int, hidden: int = 256, seed: int = 0, dtype=torch.float32):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.w1 = nn.Parameter(glorot((2 * dim, hidden), gen, dtype))
        self.b1 = nn.Parameter(torch.zeros(hidden, dtype=dtype))
        self.w2 = nn.Parameter(glorot((hidden, 1), gen, dtype))
        self.b2 = nn.Parameter(torch.zeros(1, dtype=dtype))

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        x = torch.cat([a, b], dim=-1)
        h = torch.relu(x @ self.w1 + self.b1)
        return (h @ self.w2 + self.b2).squeeze(-1)


class FeatureHead(nn.Module):
    """Per-feature predictors: class logits for categorical, one scalar for continuous."""

    def __init__(self, codec: FeatureCodec, dim: int, seed: int = 0, dtype=torch.float32):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.feature_names = codec.feature_names
        self.kinds: list[str] = []
        weights = []
        for scheme in codec.schemes.values():
            if isinstance(scheme, CategoricalScheme):
                self.kinds.append("categorical")
                weights.append(nn.Parameter(glorot((dim, scheme.width), gen, dtype)))
            else:
                self.kinds.append("continuous")
                weights.append(nn.Parameter(glorot((dim, 1), gen, dtype)))
        self.weights = nn.ParameterList(weights)

    def forward(self, h: torch.Tensor) -> list[torch.Tensor]:
        return [h @ w for w in self.weights]


class PretrainHead(nn.Module):
    """Parameters and constants for one pretraining task.

    Builds only what the task needs: a pair scorer for relation inference,
    per-feature predictors for feature inference, a learned MASK row for
    masked recovery. The contrastive temperature and negative count apply
    to every contrastive task.
    """

    def __init__(
        self,
        task: str,
        dim: int,
        codec: FeatureCodec | None = None,
        hidden: int = 256,
        tau: float = 0.07,
        k_neg: int = 16,
        seed: int = 0,
        dtype=torch.float32,
    ):
        super().__init__()
        if task not in PRETRAIN_TASKS:
            raise UsageError(f"unknown pretraining task {task!r}")
        if tau <= 0:
            raise UsageError(f"temperature must be positive, got {tau}")
        if k_neg < 1:
            raise UsageError(f"negative count must be >= 1, got {k_neg}")
        self.task = task
        self.tau = tau
        self.k_neg = k_neg
        self.pair_scorer = None
        self.feature_head = None
        self.mask_embedding = None
        if task == "tokri":
            self.pair_scorer = PairScorer(dim, hidden=hidden, seed=seed, dtype=dtype)
        elif task == "nfi":
            if codec is None:
                raise UsageError("nfi head needs the feature codec")
            self.feature_head = FeatureHead(codec, dim, seed=seed, dtype=dtype)
        elif task == "mtr":
            gen = torch.Generator().manual_seed(seed)
            self.mask_embedding = nn.Parameter(_uniform((dim,), dim**-0.5, gen, dtype))
