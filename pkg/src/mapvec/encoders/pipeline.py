"""Composition of encoder stages in the canonical token -> graph -> sequence order."""

from __future__ import annotations

import torch
from torch import nn

from ..errors import UsageError
from .graph import GraphEncoder
from .sequence import SequenceEncoder
from .token import TokenEncoder

STAGE_ORDER = ("token", "graph", "sequence")
PARADIGMS = ("sequential", "joint")


class EncoderPipeline(nn.Module):
    """Threads representations through the present stages.

    Entities pass token (then graph, when present); trajectories gather the
    resulting per-entity vectors and pass the sequence stage when present.
    """

    def __init__(
        self,
        token: TokenEncoder,
        graph: GraphEncoder | None = None,
        sequence: SequenceEncoder | None = None,
        paradigm: str = "joint",
    ):
        super().__init__()
        if paradigm not in PARADIGMS:
            raise UsageError(f"unknown training paradigm {paradigm!r}")
        self.token = token
        self.graph = graph
        self.sequence = sequence
        self.paradigm = paradigm

    @property
    def stage_names(self) -> list[str]:
        names = ["token"]
        if self.graph is not None:
            names.append("graph")
        if self.sequence is not None:
            names.append("sequence")
        return names

    def stage(self, name: str) -> nn.Module:
        module = {"token": self.token, "graph": self.graph, "sequence": self.sequence}[name]
        if module is None:
            raise UsageError(f"pipeline has no {name} stage")
        return module

    def encode_entities(self, feature_idx: torch.Tensor, adj: torch.Tensor | None = None) -> torch.Tensor:
        """(N, K) feature indices -> (N, dim) entity representations."""
        reps = self.token(feature_idx)
        if self.graph is not None:
            if adj is None:
                raise UsageError("pipeline has a graph stage but no adjacency was supplied")
            reps = self.graph(reps, adj)
        return reps

    def encode_positions(
        self,
        entity_reps: torch.Tensor,
        traj_idx: torch.Tensor,
        slots: torch.Tensor | None = None,
        lengths: torch.Tensor | None = None,
        causal: bool | None = None,
    ) -> torch.Tensor:
        """Gather entity vectors along trajectories and refine with the sequence stage.

        ``traj_idx`` is (B, K) entity row indices, padded arbitrarily past each
        row's length; outputs at padded positions are meaningless.
        """
        gathered = entity_reps[traj_idx]
        if self.sequence is None:
            return gathered
        return self.sequence(gathered, slots=slots, lengths=lengths, causal=causal)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def compose_pipeline(stages, paradigm: str = "joint") -> EncoderPipeline:
    """Build a pipeline from an ordered list of (name, module) stage pairs."""
    names = [name for name, _ in stages]
    if "token" not in names:
        raise UsageError("composition must include a token stage")
    expected = [s for s in STAGE_ORDER if s in names]
    if names != expected or len(set(names)) != len(names):
        raise UsageError(f"stages must appear in token->graph->sequence order, got {names}")
    modules = dict(stages)
    return EncoderPipeline(
        token=modules["token"],
        graph=modules.get("graph"),
        sequence=modules.get("sequence"),
        paradigm=paradigm,
    )
