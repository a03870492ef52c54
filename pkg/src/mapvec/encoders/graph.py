"""Graph encoder: symmetric-normalized graph convolution over a relation network."""

from __future__ import annotations

import torch
from torch import nn

from ..data.model import RelationNetwork
from ..errors import UsageError
from .token import glorot

_ACTIVATIONS = {"relu": torch.relu, "tanh": torch.tanh}


def normalized_adjacency(
    network: RelationNetwork,
    order: list[str] | None = None,
    dtype=torch.float32,
) -> torch.Tensor:
    """Dense D^{-1/2} (A + I) D^{-1/2} with A symmetrized via max(w_ij, w_ji).

    Self-loops keep every degree positive, so edgeless graphs normalize to
    the identity matrix.
    """
    order = list(network.vertices) if order is None else list(order)
    pos = {v: i for i, v in enumerate(order)}
    n = len(order)
    a = torch.zeros((n, n), dtype=dtype)
    for (o, d), w in network.edges.items():
        i, j = pos[o], pos[d]
        w = float(w)
        a[i, j] = max(a[i, j].item(), w)
        a[j, i] = max(a[j, i].item(), w)
    a = a + torch.eye(n, dtype=dtype)
    deg = a.sum(dim=1)
    inv_sqrt = deg.pow(-0.5)
    return inv_sqrt.unsqueeze(1) * a * inv_sqrt.unsqueeze(0)


class GraphEncoder(nn.Module):
    """L rounds of H <- act(adj @ H @ W); the final round stays linear."""

    def __init__(
        self,
        dim: int = 128,
        layers: int = 2,
        nonlinearity: str = "relu",
        seed: int = 0,
        dtype=torch.float32,
    ):
        super().__init__()
        if layers < 1:
            raise UsageError("graph encoder needs at least one layer")
        if nonlinearity not in _ACTIVATIONS:
            raise UsageError(f"unknown nonlinearity {nonlinearity!r}")
        gen = torch.Generator().manual_seed(seed)
        self.dim = dim
        self.nonlinearity = nonlinearity
        self.weights = nn.ParameterList(
            nn.Parameter(glorot((dim, dim), gen, dtype)) for _ in range(layers)
        )

    def forward(self, reps: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        if reps.shape[0] != adj.shape[0]:
            raise UsageError(
                f"representation count {reps.shape[0]} does not match vertex count {adj.shape[0]}"
            )
        act = _ACTIVATIONS[self.nonlinearity]
        h = reps
        last = len(self.weights) - 1
        for i, w in enumerate(self.weights):
            h = adj @ h @ w
            if i != last:
                h = act(h)
        return h


def graph_encode(encoder: GraphEncoder, reps: torch.Tensor, network: RelationNetwork) -> torch.Tensor:
    """Encode with the adjacency built from ``network`` in vertex order."""
    adj = normalized_adjacency(network, dtype=reps.dtype)
    return encoder(reps, adj)
