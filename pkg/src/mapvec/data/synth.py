"""Deterministic synthetic-city generator.

Lays out a grid city and plants learnable structure into it:

* POI categories and parcel function classes follow the grid cell, so
  category-style classification is recoverable from position features.
* Each synthetic user walks around a personal home POI, so trajectories
  are linkable back to their user.
* Segment traversal speeds follow a per-cell distribution and are realized
  through trajectory timestamps, so speed and travel time are recoverable
  from segment representations without ever appearing as input features.

Everything is a pure function of the spec: one master seed drives named
sub-generators, and writers emit rows in a fixed order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

from ..errors import UsageError
from .model import Dataset, DatasetMeta, MapEntity, RelationNetwork, Trajectory
from .networks import build_geo_network, build_od_network, haversine_m

ORIGIN_LON = 10.0
ORIGIN_LAT = 50.0
CELL_DLON = 0.006  # ~430 m at lat 50
CELL_DLAT = 0.004  # ~445 m

SPEED_MEANS_KMH = (18.0, 30.0, 42.0, 54.0, 66.0)
SPEED_STD_KMH = 1.5

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


@dataclass
class SyntheticCitySpec:
    grid_rows: int = 4
    grid_cols: int = 4
    n_pois: int = 100
    n_users: int = 20
    n_trajectories: int = 500
    n_categories: int = 4
    seed: int = 0

    def validate(self) -> None:
        for name in ("grid_rows", "grid_cols", "n_pois", "n_users", "n_trajectories", "n_categories"):
            if getattr(self, name) < 1:
                raise UsageError(f"synthetic spec field {name} must be >= 1")
        if self.n_users > self.n_pois:
            raise UsageError(
                f"n_users={self.n_users} exceeds n_pois={self.n_pois}: every user needs a distinct home POI"
            )


def _rng(spec: SyntheticCitySpec, label: str) -> random.Random:
    return random.Random(f"{spec.seed}:{label}")


def _cell_center(i: int, j: int) -> tuple[float, float]:
    return (ORIGIN_LON + j * CELL_DLON, ORIGIN_LAT + i * CELL_DLAT)


def _zone(i: int, j: int, cols: int) -> int:
    return i * cols + j


def _block_id(lon: float, lat: float) -> str:
    """Half-cell grid label for a point; a categorical position feature."""
    bj = int(round((lon - ORIGIN_LON) / (CELL_DLON / 2)))
    bi = int(round((lat - ORIGIN_LAT) / (CELL_DLAT / 2)))
    return f"b{bi:03d}_{bj:03d}"


def _position_features(lon: float, lat: float) -> dict[str, object]:
    return {"block": _block_id(lon, lat), "lon": lon, "lat": lat}


def row_speed_kmh(row: int) -> float:
    """Planted mean speed for every segment based at grid row ``row``."""
    return SPEED_MEANS_KMH[row % len(SPEED_MEANS_KMH)]


def generate_synthetic_city(spec: SyntheticCitySpec) -> Dataset:
    spec.validate()
    rows, cols = spec.grid_rows, spec.grid_cols

    # --- parcels: one rectangle per grid intersection --------------------
    parcels: list[MapEntity] = []
    parcel_zone: dict[str, int] = {}
    for i in range(rows):
        for j in range(cols):
            zone = _zone(i, j, cols)
            clon, clat = _cell_center(i, j)
            hx, hy = CELL_DLON / 2, CELL_DLAT / 2
            ring = [
                (clon - hx, clat - hy),
                (clon + hx, clat - hy),
                (clon + hx, clat + hy),
                (clon - hx, clat + hy),
                (clon - hx, clat - hy),
            ]
            pid = f"z{zone:04d}"
            parcels.append(
                MapEntity(
                    id=pid,
                    kind="polygon",
                    geometry=ring,
                    features={
                        "category": f"fn_{zone % spec.n_categories:02d}",
                        **_position_features(clon, clat),
                    },
                )
            )
            parcel_zone[pid] = zone

    # --- road segments between adjacent intersections ---------------------
    segments: list[MapEntity] = []
    seg_rng = _rng(spec, "segments")
    seg_zone: dict[str, int] = {}
    seg_speed: dict[str, float] = {}
    seg_endpoints: dict[str, tuple[tuple[int, int], tuple[int, int]]] = {}
    idx = 0
    for i in range(rows):
        for j in range(cols):
            for di, dj in ((0, 1), (1, 0)):
                ni, nj = i + di, j + dj
                if ni >= rows or nj >= cols:
                    continue
                a = _cell_center(i, j)
                b = _cell_center(ni, nj)
                zone = _zone(i, j, cols)
                sid = f"s{idx:04d}"
                idx += 1
                mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
                segments.append(
                    MapEntity(
                        id=sid,
                        kind="polyline",
                        geometry=[a, b],
                        features={
                            "category": f"lanes_{2 + 2 * (zone % 2)}",
                            **_position_features(*mid),
                        },
                    )
                )
                seg_zone[sid] = zone
                seg_speed[sid] = max(5.0, seg_rng.gauss(row_speed_kmh(i), SPEED_STD_KMH))
                seg_endpoints[sid] = ((i, j), (ni, nj))

    # --- POIs placed inside cells, category planted per cell --------------
    poi_rng = _rng(spec, "pois")
    pois: list[MapEntity] = []
    for p in range(spec.n_pois):
        i = poi_rng.randrange(rows)
        j = poi_rng.randrange(cols)
        zone = _zone(i, j, cols)
        clon, clat = _cell_center(i, j)
        lon = clon + CELL_DLON * poi_rng.uniform(-0.45, 0.45)
        lat = clat + CELL_DLAT * poi_rng.uniform(-0.45, 0.45)
        pois.append(
            MapEntity(
                id=f"p{p:04d}",
                kind="point",
                geometry=[(lon, lat)],
                features={
                    "category": f"cat_{zone % spec.n_categories:02d}",
                    **_position_features(lon, lat),
                },
            )
        )

    # --- POI proximity network (walk substrate) ---------------------------
    poi_knn = build_geo_network(pois, k=min(4, len(pois) - 1)) if len(pois) > 1 else RelationNetwork(
        vertices=[pois[0].id], edges={}, relation_kind="geographical"
    )

    # --- per-user biased walks over POIs ----------------------------------
    walk_rng = _rng(spec, "walks")
    neighbors = {v: sorted(d for (o, d) in poi_knn.edges if o == v) for v in poi_knn.vertices}
    homes = walk_rng.sample([p.id for p in pois], spec.n_users)
    poi_trajs: list[Trajectory] = []
    for t in range(spec.n_trajectories):
        user_idx = t % spec.n_users
        home = homes[user_idx]
        length = walk_rng.randint(4, 10)
        cur = home
        locs = [cur]
        while len(locs) < length:
            r = walk_rng.random()
            opts = neighbors.get(cur) or [cur]
            home_opts = neighbors.get(home) or [home]
            if r < 0.55:
                cur = opts[walk_rng.randrange(len(opts))]
            elif r < 0.90:
                cur = home_opts[walk_rng.randrange(len(home_opts))]
            else:
                cur = home
            locs.append(cur)
        start = EPOCH + timedelta(
            days=walk_rng.randrange(28),
            hours=6 + user_idx % 12,
            minutes=walk_rng.randrange(60),
        )
        samples = []
        t_cur = start
        for loc in locs:
            samples.append((loc, t_cur))
            t_cur = t_cur + timedelta(minutes=walk_rng.randint(20, 90))
        poi_trajs.append(Trajectory(id=f"tp{t:05d}", user=f"u{user_idx:04d}", samples=samples, variant="checkin"))

    # --- segment walks with speed-realizing timestamps --------------------
    seg_adj = {s.id: [] for s in segments}  # type: dict[str, list[str]]
    for a in segments:
        for b in segments:
            if a.id >= b.id:
                continue
            if set(seg_endpoints[a.id]) & set(seg_endpoints[b.id]):
                seg_adj[a.id].append(b.id)
                seg_adj[b.id].append(a.id)
    drive_rng = _rng(spec, "drives")
    seg_ids = [s.id for s in segments]
    seg_len_m = {s.id: haversine_m(s.geometry[0], s.geometry[1]) for s in segments}
    seg_trajs: list[Trajectory] = []
    for t in range(spec.n_trajectories):
        cur = seg_ids[drive_rng.randrange(len(seg_ids))]
        length = drive_rng.randint(5, 12)
        locs = [cur]
        prev = None
        while len(locs) < length:
            opts = [s for s in seg_adj[cur] if s != prev] or seg_adj[cur] or [cur]
            prev = cur
            cur = opts[drive_rng.randrange(len(opts))]
            locs.append(cur)
        start = EPOCH + timedelta(days=drive_rng.randrange(28), hours=drive_rng.randrange(24))
        samples = []
        t_cur = start
        for loc in locs:
            samples.append((loc, t_cur))
            speed_ms = seg_speed[loc] * drive_rng.uniform(0.95, 1.05) / 3.6
            t_cur = t_cur + timedelta(seconds=seg_len_m[loc] / speed_ms)
        seg_trajs.append(Trajectory(id=f"ts{t:05d}", user=None, samples=samples, variant="checkin"))

    # --- relation networks -------------------------------------------------
    seg_net = RelationNetwork(
        vertices=seg_ids,
        edges={(a, b): 1.0 for a in seg_ids for b in seg_adj[a]},
        relation_kind="geographical",
    )
    parcel_edges: dict[tuple[str, str], float] = {}
    for i in range(rows):
        for j in range(cols):
            for di, dj in ((0, 1), (1, 0)):
                ni, nj = i + di, j + dj
                if ni >= rows or nj >= cols:
                    continue
                a = f"z{_zone(i, j, cols):04d}"
                b = f"z{_zone(ni, nj, cols):04d}"
                parcel_edges[(a, b)] = 1.0
                parcel_edges[(b, a)] = 1.0
    parcel_net = RelationNetwork(
        vertices=[p.id for p in parcels], edges=parcel_edges, relation_kind="geographical"
    )
    poi_od = build_od_network(poi_trajs, pois)

    entities = pois + segments + parcels
    dataset = Dataset(
        entities=entities,
        trajectories=poi_trajs + seg_trajs,
        networks={
            "poi_knn": poi_knn,
            "poi_od": poi_od,
            "segment_adjacency": seg_net,
            "parcel_adjacency": parcel_net,
            "parcel_od": parcel_od_network(poi_trajs, pois, parcels),
        },
        metadata=DatasetMeta(city=f"synth{spec.seed}", crs="EPSG:4326", entity_kind="mixed"),
    )
    return dataset


def point_in_polygon(point: tuple[float, float], ring: list[tuple[float, float]]) -> bool:
    """Ray-casting test; ``ring`` is closed (first point equals last)."""
    x, y = point
    inside = False
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def parcel_of_point(point: tuple[float, float], parcels: list[MapEntity]) -> str | None:
    for p in parcels:
        if point_in_polygon(point, p.geometry):
            return p.id
    return None


def parcel_od_network(
    poi_trajs: list[Trajectory],
    pois: list[MapEntity],
    parcels: list[MapEntity],
) -> RelationNetwork:
    """OD counts between parcels, mapping POI trajectory endpoints to parcels."""
    poi_pos = {p.id: p.geometry[0] for p in pois}
    edges: dict[tuple[str, str], float] = {}
    for tr in poi_trajs:
        o = parcel_of_point(poi_pos[tr.samples[0][0]], parcels)  # type: ignore[index,arg-type]
        d = parcel_of_point(poi_pos[tr.samples[-1][0]], parcels)  # type: ignore[index,arg-type]
        if o is None or d is None:
            continue
        edges[(o, d)] = edges.get((o, d), 0.0) + 1.0
    return RelationNetwork(vertices=[p.id for p in parcels], edges=edges, relation_kind="social")
