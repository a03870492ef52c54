"""Similar-trajectory search: cosine retrieval index and detour positives."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from datetime import timedelta
from typing import Optional, Sequence

import numpy as np

from ..data.model import RelationNetwork, Trajectory
from ..errors import UsageError


@dataclass
class StsIndex:
    ids: list
    matrix: np.ndarray  # (n, d) L2-normalized rows


def sts_index(items: Sequence[tuple[object, np.ndarray]]) -> StsIndex:
    """Build a retrieval index from (trajectory id, pooled vector) pairs."""
    if not items:
        raise UsageError("cannot index an empty trajectory database")
    ids = [i for i, _ in items]
    mat = np.stack([np.asarray(v, dtype=np.float64) for _, v in items])
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if (norms == 0).any():
        raise UsageError("zero-norm trajectory vector cannot be indexed")
    return StsIndex(ids=ids, matrix=mat / norms)


def sts_query(index: StsIndex, query: np.ndarray, k: Optional[int] = None) -> list:
    """Ids ranked by descending cosine similarity; ties go to the smaller id."""
    q = np.asarray(query, dtype=np.float64)
    norm = np.linalg.norm(q)
    if norm == 0:
        raise UsageError("zero-norm query vector")
    sims = index.matrix @ (q / norm)
    order = sorted(range(len(index.ids)), key=lambda i: (-sims[i], index.ids[i]))
    ranked = [index.ids[i] for i in order]
    return ranked if k is None else ranked[:k]


def _shortest_path_avoiding(
    network: RelationNetwork,
    start: str,
    goal: str,
    avoid: set[str],
) -> Optional[list[str]]:
    """BFS shortest path start -> goal skipping ``avoid`` vertices."""
    adjacency: dict[str, list[str]] = {}
    for (o, d) in network.edges:
        adjacency.setdefault(o, []).append(d)
    for v in adjacency:
        adjacency[v].sort()
    parents: dict[str, Optional[str]] = {start: None}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if cur == goal:
            path = [cur]
            while parents[path[-1]] is not None:
                path.append(parents[path[-1]])
            return path[::-1]
        for nxt in adjacency.get(cur, []):
            if nxt in parents or (nxt in avoid and nxt != goal):
                continue
            parents[nxt] = cur
            queue.append(nxt)
    return None


def generate_detour(
    traj: Trajectory,
    geo_network: RelationNetwork,
    seed: int = 0,
    min_interior: int = 2,
    max_interior: int = 4,
) -> Optional[Trajectory]:
    """Replace a random sub-span with an alternative path sharing its endpoints.

    The replacement is the shortest path between the span endpoints that avoids
    every original interior vertex, so the detour always differs there. Spans
    of 2..4 interior hops are tried in seeded random order; returns None when
    no span admits an alternative (the no-detour signal).
    """
    if traj.variant != "checkin":
        raise UsageError("detours are defined for check-in trajectories")
    locs = [loc for loc, _ in traj.samples]
    times = [t for _, t in traj.samples]
    vset = set(geo_network.vertices)
    for v in locs:
        if v not in vset:
            raise UsageError(f"trajectory {traj.id} visits {v}, which is not on the network")

    k = len(locs)
    spans = [
        (a, b)
        for a in range(k)
        for b in range(a + min_interior + 1, min(k, a + max_interior + 2))
    ]
    rng = random.Random(seed)
    rng.shuffle(spans)
    for a, b in spans:
        interior = set(locs[a + 1 : b]) - {locs[a], locs[b]}
        if not interior:
            continue
        path = _shortest_path_avoiding(geo_network, locs[a], locs[b], avoid=interior)
        if path is None or len(path) < 2:
            continue
        new_interior = path[1:-1]
        span_seconds = (times[b] - times[a]).total_seconds()
        steps = len(new_interior) + 1
        new_times = [times[a] + timedelta(seconds=span_seconds * (i + 1) / steps) for i in range(len(new_interior))]
        samples = (
            traj.samples[: a + 1]
            + list(zip(new_interior, new_times))
            + traj.samples[b:]
        )
        return Trajectory(id=f"{traj.id}~detour", user=traj.user, samples=samples, variant="checkin")
    return None
