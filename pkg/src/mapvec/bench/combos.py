"""Valid pretraining-task combinations per entity type."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from ..errors import UsageError

# One task per available category; categories listed in stage order.
AVAILABLE_TASKS = {
    "point": (("token", ("tokri", "trcl")), ("sequence", ("trajp", "mtr", "atrcl"))),
    "polyline": (
        ("token", ("tokri", "trcl")),
        ("graph", ("nfi", "gau", "agcl")),
        ("sequence", ("trajp", "mtr", "atrcl")),
    ),
    "polygon": (("token", ("tokri", "trcl", "atocl")), ("graph", ("nfi", "gau", "ncl"))),
}

_ALIASES = {"poi": "point", "segment": "polyline", "parcel": "polygon"}


@dataclass(frozen=True)
class CombinationSpec:
    entity_kind: str
    tasks: tuple[str, ...]

    @property
    def name(self) -> str:
        return "+".join(self.tasks)

    @property
    def stages(self) -> list[str]:
        kinds = dict(AVAILABLE_TASKS[self.entity_kind])
        out = ["token"]
        for stage in ("graph", "sequence"):
            if stage in kinds:
                out.append(stage)
        return out


def enumerate_combinations(entity_kind: str) -> list[CombinationSpec]:
    """Cartesian product over the availability table, in deterministic order."""
    kind = _ALIASES.get(entity_kind.lower(), entity_kind.lower())
    if kind not in AVAILABLE_TASKS:
        raise UsageError(f"unknown entity kind {entity_kind!r}")
    categories = [tasks for _, tasks in AVAILABLE_TASKS[kind]]
    return [CombinationSpec(entity_kind=kind, tasks=combo) for combo in itertools.product(*categories)]
