"""The ten pretraining losses.

Token stage: relation inference (tokri), relation contrastive (trcl),
augmented-view contrastive (atocl). Graph stage: feature inference (nfi),
adjacency reconstruction (gau), neighborhood contrastive (ncl),
augmented-graph contrastive (agcl). Sequence stage: next-half prediction
(trajp), masked recovery (mtr), augmented-trajectory contrastive (atrcl).

Every loss is a scalar tensor, differentiable through its head and every
upstream encoder parameter. Stochastic losses draw from seeded generators,
so a loss is a pure function of (parameters, inputs, seed).
"""

from __future__ import annotations

import math
import random
from typing import Optional, Sequence

import torch
import torch.nn.functional as F

from ..data.model import RelationNetwork
from ..encoders.codec import FeatureCodec
from ..encoders.graph import GraphEncoder, normalized_adjacency
from ..encoders.sequence import SequenceEncoder
from ..encoders.token import TokenEncoder
from ..errors import UsageError
from .augment import AugmentationPolicy, augment_blocks, augment_positions, drop_edges
from .heads import PretrainHead


def _cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    na = a.norm(dim=-1)
    nb = b.norm(dim=-1)
    if (na == 0).any() or (nb == 0).any():
        raise UsageError("cosine similarity is undefined for zero-norm vectors")
    return (a * b).sum(dim=-1) / (na * nb)


def info_nce(
    anchor: torch.Tensor,
    positive: torch.Tensor,
    negatives: torch.Tensor,
    tau: float = 0.07,
) -> torch.Tensor:
    """-log softmax of the positive among cosine logits scaled by 1/tau.

    Accepts one anchor ((d,), negatives (K, d)) or a batch ((B, d),
    negatives (B, K, d)); batches average over anchors.
    """
    single = anchor.dim() == 1
    if single:
        anchor = anchor.unsqueeze(0)
        positive = positive.unsqueeze(0)
        negatives = negatives.unsqueeze(0)
    pos_logit = _cosine(anchor, positive) / tau  # (B,)
    neg_logits = _cosine(anchor.unsqueeze(1), negatives) / tau  # (B, K)
    logits = torch.cat([pos_logit.unsqueeze(1), neg_logits], dim=1)
    loss = torch.logsumexp(logits, dim=1) - pos_logit
    return loss.mean()


# ---------------------------------------------------------------------------
# token stage
# ---------------------------------------------------------------------------

def tokri_loss(
    head: PretrainHead,
    r_i: torch.Tensor,
    r_j: torch.Tensor,
    labels: torch.Tensor,
) -> torch.Tensor:
    """Binary cross-entropy of the pair scorer against 0/1 relation labels."""
    logits = head.pair_scorer(r_i, r_j)
    return F.binary_cross_entropy_with_logits(logits, labels.to(logits.dtype))


def trcl_loss(
    head: PretrainHead,
    anchor: torch.Tensor,
    positive: torch.Tensor,
    negatives: torch.Tensor,
) -> torch.Tensor:
    """InfoNCE pulling related entities together against sampled negatives."""
    return info_nce(anchor, positive, negatives, tau=head.tau)


def atocl_loss(
    head: PretrainHead,
    encoder: TokenEncoder,
    blocks: torch.Tensor,
    policy: AugmentationPolicy,
) -> torch.Tensor:
    """Two augmented views per entity; other in-batch entities are negatives."""
    if policy.kind not in ("feature-dropout", "feature-replace", "noise"):
        raise UsageError(f"augmentation {policy.kind!r} is not a token-view policy")
    b = blocks.shape[0]
    if b < 2:
        raise UsageError("augmented-token contrastive learning needs a batch of >= 2 entities")
    views = []
    for v in range(2):
        rng = policy.rng(view=v)
        if policy.kind == "noise":
            z = encoder.forward_blocks(blocks)
            gen = torch.Generator().manual_seed(rng.randrange(2**31))
            z = z + policy.rate * torch.randn(z.shape, generator=gen, dtype=z.dtype)
        else:
            z = encoder.forward_blocks(augment_blocks(blocks, encoder.widths, policy, rng))
        views.append(z)
    z1, z2 = views
    others = torch.stack([torch.cat([z2[:i], z2[i + 1 :]]) for i in range(b)])  # (B, B-1, d)
    return info_nce(z1, z2, others, tau=head.tau)


# ---------------------------------------------------------------------------
# graph stage
# ---------------------------------------------------------------------------

def nfi_loss(
    head: PretrainHead,
    h: torch.Tensor,
    feature_idx: torch.Tensor,
    codec: FeatureCodec,
) -> torch.Tensor:
    """Sum of per-feature prediction losses: cross-entropy for categorical
    features, squared error against bin centers for continuous ones."""
    if head.feature_head is None:
        raise UsageError("head was not built for feature inference")
    if head.feature_head.feature_names != codec.feature_names:
        raise UsageError("codec features do not match the head's training codec")
    outputs = head.feature_head(h)
    total = h.new_zeros(())
    for k, (name, scheme) in enumerate(codec.schemes.items()):
        target_idx = feature_idx[:, k]
        if head.feature_head.kinds[k] == "categorical":
            total = total + F.cross_entropy(outputs[k], target_idx)
        else:
            centers = torch.tensor(
                [scheme.center_of(int(i)) for i in target_idx], dtype=h.dtype
            )
            total = total + F.mse_loss(outputs[k].squeeze(-1), centers)
    return total


def gau_loss(
    head: PretrainHead,
    h: torch.Tensor,
    network: RelationNetwork,
    order: Optional[list[str]] = None,
    seed: int = 0,
    candidates: Optional[Sequence[int]] = None,
) -> torch.Tensor:
    """Reconstruct the binarized adjacency from sigmoid(H H^T).

    Mean BCE over all linked unordered pairs plus an equal-size sample of
    unlinked pairs, so sparse graphs keep a balanced objective. ``candidates``
    restricts the pair universe to a row subset (e.g. the training partition).
    """
    order = list(network.vertices) if order is None else list(order)
    pos_idx = {v: i for i, v in enumerate(order)}
    universe = sorted(candidates) if candidates is not None else list(range(len(order)))
    allowed = set(universe)
    linked = set()
    for (o, d) in network.edges:
        i, j = pos_idx[o], pos_idx[d]
        if i != j and i in allowed and j in allowed:
            linked.add((min(i, j), max(i, j)))
    if not linked:
        raise UsageError("graph autoencoder loss needs at least one edge")
    unlinked = [
        (a, b)
        for ai, a in enumerate(universe)
        for b in universe[ai + 1 :]
        if (a, b) not in linked
    ]
    rng = random.Random(seed)
    sampled_neg = rng.sample(unlinked, min(len(linked), len(unlinked)))
    pairs = sorted(linked) + sorted(sampled_neg)
    ii = torch.tensor([p[0] for p in pairs])
    jj = torch.tensor([p[1] for p in pairs])
    logits = (h[ii] * h[jj]).sum(dim=-1)
    targets = torch.tensor([1.0] * len(linked) + [0.0] * len(sampled_neg), dtype=h.dtype)
    return F.binary_cross_entropy_with_logits(logits, targets)


def ncl_loss(
    head: PretrainHead,
    h: torch.Tensor,
    network: RelationNetwork,
    anchor_index: int,
    order: Optional[list[str]] = None,
    seed: int = 0,
) -> Optional[torch.Tensor]:
    """InfoNCE against a sampled out-neighbor; non-neighbors are negatives.

    Returns None (a skip signal) when the anchor has no out-neighbor or no
    negative exists; callers exclude such anchors from the batch.
    """
    order = list(network.vertices) if order is None else list(order)
    pos_idx = {v: i for i, v in enumerate(order)}
    anchor_id = order[anchor_index]
    neighbors = sorted({pos_idx[d] for (o, d) in network.edges if o == anchor_id and d != anchor_id})
    if not neighbors:
        return None
    non_neighbors = [i for i in range(len(order)) if i != anchor_index and i not in set(neighbors)]
    if not non_neighbors:
        return None
    rng = random.Random(seed)
    positive = neighbors[rng.randrange(len(neighbors))]
    k = min(head.k_neg, len(non_neighbors))
    negative_rows = rng.sample(non_neighbors, k)
    return info_nce(h[anchor_index], h[positive], h[negative_rows], tau=head.tau)


def agcl_loss(
    head: PretrainHead,
    encoder: GraphEncoder,
    reps: torch.Tensor,
    network: RelationNetwork,
    policy: AugmentationPolicy,
) -> torch.Tensor:
    """Node-level contrast between two edge-dropped views of the network."""
    if policy.kind != "edge-drop":
        raise UsageError("augmented-graph contrastive learning needs an edge-drop policy")
    views = []
    for v in range(2):
        dropped = drop_edges(network, policy, policy.rng(view=v))
        adj = normalized_adjacency(dropped, dtype=reps.dtype)
        views.append(encoder(reps, adj))
    h1, h2 = views
    n = h1.shape[0]
    if n < 2:
        raise UsageError("augmented-graph contrastive learning needs >= 2 vertices")
    others = torch.stack([torch.cat([h2[:i], h2[i + 1 :]]) for i in range(n)])
    return info_nce(h1, h2, others, tau=head.tau)


# ---------------------------------------------------------------------------
# sequence stage
# ---------------------------------------------------------------------------

def _entity_logits(states: torch.Tensor, entity_reps: torch.Tensor) -> torch.Tensor:
    # Decoder tied to the entity representation table.
    return states @ entity_reps.T


def trajp_loss(
    head: PretrainHead,
    encoder: SequenceEncoder,
    entity_reps: torch.Tensor,
    traj_idx: Sequence[int],
    slots: Optional[Sequence[int]] = None,
) -> torch.Tensor:
    """Autoregressive cross-entropy over the suffix half of a trajectory.

    The split index is ceil(K/2); each suffix position is predicted from the
    causally encoded state one step earlier.
    """
    k_total = len(traj_idx)
    if k_total < 2:
        raise UsageError("trajectory prediction needs length >= 2")
    split = -(-k_total // 2)
    idx = torch.tensor(list(traj_idx))
    slot_t = torch.tensor(list(slots)) if slots is not None else None
    states = encoder(entity_reps[idx], slots=slot_t, causal=True)
    logits = _entity_logits(states[split - 1 : k_total - 1], entity_reps)
    targets = idx[split:]
    return F.cross_entropy(logits, targets)


def mtr_loss(
    head: PretrainHead,
    encoder: SequenceEncoder,
    entity_reps: torch.Tensor,
    traj_idx: Sequence[int],
    slots: Optional[Sequence[int]] = None,
    mask_ratio: float = 0.15,
    mask_mode: str = "random",
    seed: int = 0,
) -> torch.Tensor:
    """Cross-entropy at masked positions after bidirectional re-encoding."""
    if head.mask_embedding is None:
        raise UsageError("head was not built for masked recovery")
    k_total = len(traj_idx)
    masked = mask_positions(k_total, mask_ratio, mask_mode, seed)
    idx = torch.tensor(list(traj_idx))
    inputs = entity_reps[idx].clone()
    inputs[masked] = head.mask_embedding.to(inputs.dtype)
    slot_t = torch.tensor(list(slots)) if slots is not None else None
    states = encoder(inputs, slots=slot_t, causal=False)
    logits = _entity_logits(states[masked], entity_reps)
    return F.cross_entropy(logits, idx[masked])


def pad_batch(
    position_lists: Sequence[Sequence[int]],
    slot_lists: Optional[Sequence[Sequence[int]]] = None,
) -> tuple[torch.Tensor, Optional[torch.Tensor], torch.Tensor]:
    """Pad variable-length index lists to (B, L) plus a lengths vector."""
    lengths = torch.tensor([len(p) for p in position_lists])
    max_len = int(lengths.max())
    idx = torch.zeros((len(position_lists), max_len), dtype=torch.long)
    slots = torch.zeros_like(idx) if slot_lists is not None else None
    for i, positions in enumerate(position_lists):
        idx[i, : len(positions)] = torch.tensor(list(positions))
        if slots is not None:
            slots[i, : len(positions)] = torch.tensor(list(slot_lists[i]))
    return idx, slots, lengths


def masked_mean(states: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    """Mean over valid positions of a padded (B, L, d) batch."""
    l = states.shape[1]
    mask = (torch.arange(l).unsqueeze(0) < lengths.unsqueeze(1)).to(states.dtype)
    return (states * mask.unsqueeze(-1)).sum(dim=1) / lengths.unsqueeze(1).to(states.dtype)


def atrcl_loss(
    head: PretrainHead,
    encoder: Optional[SequenceEncoder],
    entity_reps: torch.Tensor,
    trajs: Sequence[Sequence[int]],
    policy: AugmentationPolicy,
    slots: Optional[Sequence[Sequence[int]]] = None,
) -> torch.Tensor:
    """Contrast mean-pooled views of each trajectory against the rest of the batch.

    Time-slot inputs are kept only for augmentations that preserve positions
    (point deletion breaks the alignment).
    """
    if policy.kind not in ("point-delete", "point-replace", "subseq-replace", "noise"):
        raise UsageError(f"augmentation {policy.kind!r} is not a trajectory policy")
    if len(trajs) < 2:
        raise UsageError("augmented-trajectory contrastive learning needs a batch of >= 2")
    n_entities = entity_reps.shape[0]
    views = []
    for v in range(2):
        rng = policy.rng(view=v)
        aug_lists = [augment_positions(list(p), n_entities, policy, rng) for p in trajs]
        keep_slots = slots is not None and policy.kind != "point-delete"
        idx, slot_t, lengths = pad_batch(aug_lists, slots if keep_slots else None)
        reps = entity_reps[idx]
        if policy.kind == "noise":
            gen = torch.Generator().manual_seed(rng.randrange(2**31))
            reps = reps + policy.rate * torch.randn(reps.shape, generator=gen, dtype=reps.dtype)
        if encoder is not None:
            reps = encoder(reps, slots=slot_t, lengths=lengths, causal=False)
        views.append(masked_mean(reps, lengths))
    z1, z2 = views
    b = z1.shape[0]
    others = torch.stack([torch.cat([z2[:i], z2[i + 1 :]]) for i in range(b)])
    return info_nce(z1, z2, others, tau=head.tau)


def trajp_batch_loss(
    head: PretrainHead,
    encoder: SequenceEncoder,
    entity_reps: torch.Tensor,
    trajs: Sequence[Sequence[int]],
    slots: Optional[Sequence[Sequence[int]]] = None,
) -> torch.Tensor:
    """Mean of per-trajectory prediction losses over a padded batch."""
    if any(len(t) < 2 for t in trajs):
        raise UsageError("trajectory prediction needs length >= 2")
    idx, slot_t, lengths = pad_batch(trajs, slots)
    states = encoder(entity_reps[idx], slots=slot_t, lengths=lengths, causal=True)
    per_traj = []
    for i, positions in enumerate(trajs):
        k_total = len(positions)
        split = -(-k_total // 2)
        logits = _entity_logits(states[i, split - 1 : k_total - 1], entity_reps)
        per_traj.append(F.cross_entropy(logits, idx[i, split:k_total]))
    return torch.stack(per_traj).mean()


def mask_positions(k_total: int, mask_ratio: float, mask_mode: str, seed: int) -> list[int]:
    """Deterministic masked-position choice shared by single and batched paths."""
    if mask_ratio <= 0:
        raise UsageError(f"mask ratio must be positive, got {mask_ratio}")
    if mask_mode not in ("random", "contiguous"):
        raise UsageError(f"unknown mask mode {mask_mode!r}")
    n_masked = min(k_total, math.ceil(mask_ratio * k_total))
    rng = random.Random(seed)
    if mask_mode == "random":
        return sorted(rng.sample(range(k_total), n_masked))
    start = rng.randrange(k_total - n_masked + 1)
    return list(range(start, start + n_masked))


def mtr_batch_loss(
    head: PretrainHead,
    encoder: SequenceEncoder,
    entity_reps: torch.Tensor,
    trajs: Sequence[Sequence[int]],
    slots: Optional[Sequence[Sequence[int]]] = None,
    mask_ratio: float = 0.15,
    mask_mode: str = "random",
    seed: int = 0,
) -> torch.Tensor:
    """Mean of per-trajectory masked-recovery losses over a padded batch."""
    if head.mask_embedding is None:
        raise UsageError("head was not built for masked recovery")
    idx, slot_t, lengths = pad_batch(trajs, slots)
    inputs = entity_reps[idx].clone()
    masked_by_row = []
    for i, positions in enumerate(trajs):
        masked = mask_positions(len(positions), mask_ratio, mask_mode, seed=hash((seed, i)) & 0x7FFFFFFF)
        masked_by_row.append(masked)
        inputs[i, masked] = head.mask_embedding.to(inputs.dtype)
    states = encoder(inputs, slots=slot_t, lengths=lengths, causal=False)
    per_traj = []
    for i, masked in enumerate(masked_by_row):
        logits = _entity_logits(states[i, masked], entity_reps)
        per_traj.append(F.cross_entropy(logits, idx[i, masked]))
    return torch.stack(per_traj).mean()
