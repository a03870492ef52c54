"""Relation-network construction: OD flow counting and spatial proximity."""

from __future__ import annotations

import math
from typing import Optional

from ..errors import UsageError
from .model import MapEntity, RelationNetwork, Trajectory

EARTH_RADIUS_M = 6_371_000.0


def haversine_m(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in meters between two (lon, lat) points."""
    lon1, lat1 = map(math.radians, a)
    lon2, lat2 = map(math.radians, b)
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def build_od_network(trajs: list[Trajectory], entities: list[MapEntity]) -> RelationNetwork:
    """Social network whose edge weight counts trajectories from origin to destination.

    Only the first and last sample of each check-in trajectory are used;
    single-sample trajectories count as self-loops.
    """
    vertices = [e.id for e in entities]
    vset = set(vertices)
    edges: dict[tuple[str, str], float] = {}
    for tr in trajs:
        if tr.variant != "checkin":
            raise UsageError(f"trajectory {tr.id} is not check-in variant")
        origin = tr.samples[0][0]
        dest = tr.samples[-1][0]
        if origin not in vset or dest not in vset:
            raise UsageError(f"trajectory {tr.id} endpoints are not in the entity set")
        key = (origin, dest)
        edges[key] = edges.get(key, 0.0) + 1.0
    return RelationNetwork(vertices=vertices, edges=edges, relation_kind="social")


def build_geo_network(
    entities: list[MapEntity],
    threshold: Optional[float] = None,
    k: Optional[int] = None,
) -> RelationNetwork:
    """Geographical proximity network over entity representative points.

    Threshold mode links every pair closer than ``threshold`` meters in both
    directions with weight 1. k mode links each entity to its ``k`` nearest
    neighbors (ties broken by smaller entity id). Exactly one selector must
    be given.
    """
    if (threshold is None) == (k is None):
        raise UsageError("supply exactly one of threshold or k")

    points = {e.id: e.representative_point() for e in entities}
    vertices = [e.id for e in entities]
    edges: dict[tuple[str, str], float] = {}

    if threshold is not None:
        for i, a in enumerate(vertices):
            for b in vertices[i + 1 :]:
                if haversine_m(points[a], points[b]) < threshold:
                    edges[(a, b)] = 1.0
                    edges[(b, a)] = 1.0
    else:
        if k < 1:  # type: ignore[operator]
            raise UsageError("k must be >= 1")
        for a in vertices:
            ranked = sorted(
                (b for b in vertices if b != a),
                key=lambda b: (haversine_m(points[a], points[b]), b),
            )
            for b in ranked[:k]:
                edges[(a, b)] = 1.0

    return RelationNetwork(vertices=vertices, edges=edges, relation_kind="geographical")
