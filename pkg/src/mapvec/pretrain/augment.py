"""Stochastic augmentation operators for contrastive pretraining views."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

import torch

from ..data.model import RelationNetwork
from ..errors import UsageError

AUGMENTATION_KINDS = (
    "feature-dropout",
    "feature-replace",
    "edge-drop",
    "point-delete",
    "point-replace",
    "subseq-replace",
    "noise",
)


@dataclass
class AugmentationPolicy:
    kind: str
    rate: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in AUGMENTATION_KINDS:
            raise UsageError(f"unknown augmentation kind {self.kind!r}")
        if not (0.0 < self.rate < 1.0):
            raise UsageError(f"augmentation rate must be in (0, 1), got {self.rate}")

    def reseeded(self, salt: int) -> "AugmentationPolicy":
        return replace(self, seed=hash((self.seed, salt)) & 0x7FFFFFFF)

    def rng(self, view: int = 0) -> random.Random:
        return random.Random(f"{self.seed}:{view}")


def augment_blocks(
    blocks: torch.Tensor,
    widths: list[int],
    policy: AugmentationPolicy,
    rng: random.Random,
) -> torch.Tensor:
    """Per-entity feature-block augmentation on one-hot block matrices (B, sum widths)."""
    out = blocks.clone()
    b = blocks.shape[0]
    offsets = []
    pos = 0
    for w in widths:
        offsets.append((pos, pos + w))
        pos += w
    if policy.kind not in ("feature-dropout", "feature-replace"):
        raise UsageError(f"{policy.kind!r} does not apply to feature blocks")
    for i in range(b):
        chosen = [k for k in range(len(widths)) if rng.random() < policy.rate]
        if policy.kind == "feature-dropout" and len(chosen) == len(widths):
            # Dropping every feature would leave a zero representation.
            chosen.remove(chosen[rng.randrange(len(chosen))])
        for k in chosen:
            lo, hi = offsets[k]
            if policy.kind == "feature-dropout":
                out[i, lo:hi] = 0.0
            else:
                donor = rng.randrange(b)
                out[i, lo:hi] = blocks[donor, lo:hi]
    return out


def edge_drop_weights(network: RelationNetwork, rate: float) -> dict[tuple[str, str], float]:
    """Per-edge drop probability rate * (1 - w_norm); heavier edges survive more.

    Weights are min-max normalized over the network; a constant-weight network
    normalizes to 0, so every edge drops with the plain rate.
    """
    if not network.edges:
        return {}
    values = list(network.edges.values())
    lo, hi = min(values), max(values)
    span = hi - lo
    probs = {}
    for key, w in network.edges.items():
        w_norm = 0.0 if span == 0 else (w - lo) / span
        probs[key] = rate * (1.0 - w_norm)
    return probs


def drop_edges(network: RelationNetwork, policy: AugmentationPolicy, rng: random.Random) -> RelationNetwork:
    if policy.kind != "edge-drop":
        raise UsageError("drop_edges requires an edge-drop policy")
    probs = edge_drop_weights(network, policy.rate)
    kept = {k: w for k, w in network.edges.items() if rng.random() >= probs[k]}
    return RelationNetwork(vertices=list(network.vertices), edges=kept, relation_kind=network.relation_kind)


def augment_positions(
    positions: list[int],
    n_entities: int,
    policy: AugmentationPolicy,
    rng: random.Random,
) -> list[int]:
    """Trajectory-position augmentation over entity row indices."""
    k = len(positions)
    if policy.kind == "point-delete":
        kept = [p for p in positions if rng.random() >= policy.rate]
        if not kept:
            kept = [positions[rng.randrange(k)]]
        return kept
    if policy.kind == "point-replace":
        return [rng.randrange(n_entities) if rng.random() < policy.rate else p for p in positions]
    if policy.kind == "subseq-replace":
        run = max(1, int(-(-policy.rate * k // 1)))  # ceil
        run = min(run, k)
        start = rng.randrange(k - run + 1)
        out = list(positions)
        for i in range(start, start + run):
            out[i] = rng.randrange(n_entities)
        return out
    if policy.kind == "noise":
        return list(positions)
    raise UsageError(f"{policy.kind!r} does not apply to trajectory positions")
