import random
from datetime import datetime, timedelta, timezone

import pytest

from mapvec.data import MapEntity, RelationNetwork, Trajectory

T0 = datetime(2024, 3, 1, 8, 0, 0, tzinfo=timezone.utc)


def make_point(eid, lon=10.0, lat=50.0, **features):
    return MapEntity(id=eid, kind="point", geometry=[(lon, lat)], features=features)


def random_entities(rng: random.Random, n: int) -> list[MapEntity]:
    """Random mix of points / polylines / polygons with a shared feature schema."""
    out = []
    for i in range(n):
        kind = rng.choice(["point", "polyline", "polygon"])
        lon = rng.uniform(-10, 10)
        lat = rng.uniform(40, 60)
        if kind == "point":
            geom = [(lon, lat)]
        elif kind == "polyline":
            geom = [(lon, lat), (lon + 0.01, lat + 0.01), (lon + 0.02, lat)][: rng.randint(2, 3)]
        else:
            geom = [(lon, lat), (lon + 0.01, lat), (lon + 0.01, lat + 0.01), (lon, lat)]
        out.append(
            MapEntity(
                id=f"e{i:04d}",
                kind=kind,
                geometry=geom,
                features={"category": rng.choice(["a", "b", "c"]), "score": rng.uniform(0, 100)},
            )
        )
    return out


def random_checkin_trajs(rng: random.Random, entity_ids, n, min_len=1, max_len=8, users=None):
    out = []
    for i in range(n):
        length = rng.randint(min_len, max_len)
        t = T0 + timedelta(minutes=rng.randrange(10_000))
        samples = []
        for _ in range(length):
            samples.append((rng.choice(entity_ids), t))
            t += timedelta(minutes=rng.randint(1, 120))
        user = rng.choice(users) if users else None
        out.append(Trajectory(id=f"t{i:04d}", user=user, samples=samples, variant="checkin"))
    return out


def random_network(rng: random.Random, vertices, n_edges, kind="geographical"):
    n_edges = min(n_edges, len(vertices) ** 2)  # distinct (o, d) pairs available
    edges = {}
    while len(edges) < n_edges:
        o, d = rng.choice(vertices), rng.choice(vertices)
        edges[(o, d)] = float(rng.randint(1, 9))
    return RelationNetwork(vertices=list(vertices), edges=edges, relation_kind=kind)


@pytest.fixture
def rng():
    return random.Random(20240301)
