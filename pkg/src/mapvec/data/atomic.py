"""Readers and writers for the three atomic CSV file types.

`.geo` holds map entities, `.traj` trajectory samples, `.rel` relation-network
edges. All files are UTF-8, comma-separated, RFC-4180 quoted, "\\n"-terminated.
Floats are written with `repr` so a write/read round trip is exact.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

from ..errors import FormatError, IntegrityError
from .model import MapEntity, RelationNetwork, Trajectory

GEO_TYPE_BY_KIND = {"point": "Point", "polyline": "LineString", "polygon": "Polygon"}
KIND_BY_GEO_TYPE = {v: k for k, v in GEO_TYPE_BY_KIND.items()}
REL_TAG_BY_KIND = {"geographical": "geo", "social": "social"}
KIND_BY_REL_TAG = {v: k for k, v in REL_TAG_BY_KIND.items()}


def _format_value(v: Union[str, float]) -> str:
    if isinstance(v, bool):
        raise FormatError(f"boolean feature values are not supported: {v}")
    if isinstance(v, (int, float)):
        return repr(float(v))
    return str(v)


def _parse_value(s: str) -> Union[str, float]:
    try:
        return float(s)
    except ValueError:
        return s


def format_timestamp(t: datetime) -> str:
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    t = t.astimezone(timezone.utc)
    if t.microsecond:
        return t.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"
    return t.strftime("%Y-%m-%dT%H:%M:%S") + "Z"


def parse_timestamp(s: str) -> datetime:
    try:
        t = datetime.fromisoformat(s.replace("Z", "+00:00"))
    except ValueError as exc:
        raise FormatError(f"bad ISO-8601 timestamp {s!r}") from exc
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)


# ---------------------------------------------------------------------------
# .geo
# ---------------------------------------------------------------------------

def save_geo(entities: list[MapEntity], path: Union[str, Path]) -> None:
    feature_keys = sorted({k for e in entities for k in e.features})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["geo_id", "type", "coordinates"] + feature_keys)
        for e in entities:
            if e.kind == "point":
                coords = json.dumps(list(e.geometry[0]))
            else:
                coords = json.dumps([list(c) for c in e.geometry])
            row = [e.id, GEO_TYPE_BY_KIND[e.kind], coords]
            for k in feature_keys:
                if k not in e.features:
                    raise IntegrityError(f"entity {e.id} is missing feature {k!r}; .geo cells may not be empty")
                row.append(_format_value(e.features[k]))
            writer.writerow(row)


def load_geo(path: Union[str, Path]) -> list[MapEntity]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty .geo file") from None
        if header[:3] != ["geo_id", "type", "coordinates"]:
            raise FormatError(f"{path}: bad .geo header {header[:3]}")
        feature_keys = header[3:]

        entities: list[MapEntity] = []
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3 + len(feature_keys):
                raise FormatError(f"{path}:{lineno}: expected {3 + len(feature_keys)} columns, got {len(row)}")
            geo_id, geo_type, coord_str = row[0], row[1], row[2]
            if geo_type not in KIND_BY_GEO_TYPE:
                raise FormatError(f"{path}:{lineno}: unknown geometry type {geo_type!r}")
            try:
                parsed = json.loads(coord_str)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: coordinates are not valid JSON") from exc
            kind = KIND_BY_GEO_TYPE[geo_type]
            try:
                if kind == "point":
                    geometry = [(float(parsed[0]), float(parsed[1]))]
                else:
                    geometry = [(float(p[0]), float(p[1])) for p in parsed]
            except (TypeError, ValueError, IndexError) as exc:
                raise FormatError(f"{path}:{lineno}: malformed coordinate array") from exc
            features = {k: _parse_value(row[3 + i]) for i, k in enumerate(feature_keys)}
            entity = MapEntity(id=geo_id, kind=kind, geometry=geometry, features=features)
            if geo_id in seen:
                raise IntegrityError(f"{path}:{lineno}: duplicate entity id {geo_id}")
            seen.add(geo_id)
            entity.validate()
            entities.append(entity)
    return entities


# ---------------------------------------------------------------------------
# .traj
# ---------------------------------------------------------------------------

def save_traj(trajectories: list[Trajectory], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["traj_id", "step", "user_id", "entity_id", "lon", "lat", "time"])
        for tr in trajectories:
            for step, (loc, t) in enumerate(tr.samples):
                if tr.variant == "checkin":
                    entity_id, lon, lat = loc, "", ""
                else:
                    entity_id, lon, lat = "", repr(float(loc[0])), repr(float(loc[1]))
                writer.writerow([tr.id, step, tr.user or "", entity_id, lon, lat, format_timestamp(t)])


def load_traj(path: Union[str, Path]) -> list[Trajectory]:
    rows_by_traj: dict[str, list[tuple[int, Optional[str], object, datetime]]] = {}
    users: dict[str, Optional[str]] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty .traj file") from None
        if header != ["traj_id", "step", "user_id", "entity_id", "lon", "lat", "time"]:
            raise FormatError(f"{path}: bad .traj header")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 7:
                raise FormatError(f"{path}:{lineno}: expected 7 columns, got {len(row)}")
            traj_id, step_s, user_id, entity_id, lon_s, lat_s, time_s = row
            try:
                step = int(step_s)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad step {step_s!r}") from exc
            has_entity = entity_id != ""
            has_coord = lon_s != "" or lat_s != ""
            if has_entity == has_coord:
                raise FormatError(
                    f"{path}:{lineno}: exactly one of entity_id or (lon, lat) must be populated"
                )
            if has_entity:
                loc: object = entity_id
            else:
                try:
                    loc = (float(lon_s), float(lat_s))
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad coordinates") from exc
            t = parse_timestamp(time_s)
            if traj_id not in rows_by_traj:
                rows_by_traj[traj_id] = []
                users[traj_id] = user_id or None
                order.append(traj_id)
            elif (user_id or None) != users[traj_id]:
                raise IntegrityError(f"{path}:{lineno}: trajectory {traj_id} has conflicting user ids")
            rows_by_traj[traj_id].append((step, users[traj_id], loc, t))

    trajectories = []
    for traj_id in order:
        rows = sorted(rows_by_traj[traj_id], key=lambda r: r[0])
        steps = [r[0] for r in rows]
        if steps != list(range(len(rows))):
            raise FormatError(f"{path}: trajectory {traj_id} has non-consecutive steps {steps}")
        kinds = {isinstance(r[2], str) for r in rows}
        if len(kinds) > 1:
            raise IntegrityError(f"{path}: trajectory {traj_id} mixes check-in and coordinate samples")
        variant = "checkin" if kinds.pop() else "coordinate"
        samples = [(r[2], r[3]) for r in rows]
        tr = Trajectory(id=traj_id, user=users[traj_id], samples=samples, variant=variant)  # type: ignore[arg-type]
        tr.validate()
        trajectories.append(tr)
    return trajectories


# ---------------------------------------------------------------------------
# .rel
# ---------------------------------------------------------------------------

def save_rel(network: RelationNetwork, path: Union[str, Path]) -> None:
    tag = REL_TAG_BY_KIND[network.relation_kind]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rel_id", "origin_id", "destination_id", "rel_type", "weight"])
        for i, ((o, d), w) in enumerate(sorted(network.edges.items())):
            writer.writerow([f"r{i}", o, d, tag, repr(float(w))])


def load_rel(
    path: Union[str, Path],
    vertices: Optional[list[str]] = None,
    relation_kind: str = "geographical",
) -> RelationNetwork:
    """Load a relation network; ``vertices`` declares the vertex universe.

    When ``vertices`` is omitted the universe is the sorted set of endpoints
    seen in the file. ``relation_kind`` applies only to edgeless files; with
    edges present the kind comes from the rel_type column.
    """
    declared = set(vertices) if vertices is not None else None
    edges: dict[tuple[str, str], float] = {}
    kinds: set[str] = set()
    endpoints: set[str] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty .rel file") from None
        if header[:4] != ["rel_id", "origin_id", "destination_id", "rel_type"]:
            raise FormatError(f"{path}: bad .rel header")
        has_weight = len(header) > 4 and header[4] == "weight"
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            _, origin, dest, rel_tag = row[:4]
            if rel_tag not in KIND_BY_REL_TAG:
                raise FormatError(f"{path}:{lineno}: unknown rel_type {rel_tag!r}")
            kinds.add(KIND_BY_REL_TAG[rel_tag])
            if has_weight:
                try:
                    weight = float(row[4])
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad weight {row[4]!r}") from exc
            else:
                weight = 1.0
            if weight < 0:
                raise IntegrityError(f"{path}:{lineno}: negative weight {weight}")
            if declared is not None:
                for v in (origin, dest):
                    if v not in declared:
                        raise IntegrityError(f"{path}:{lineno}: endpoint {v} is not a declared vertex")
            if (origin, dest) in edges:
                raise IntegrityError(f"{path}:{lineno}: duplicate edge ({origin}, {dest})")
            edges[(origin, dest)] = weight
            endpoints.update((origin, dest))

    if len(kinds) > 1:
        raise FormatError(f"{path}: mixed rel_type values in one file")
    kind = kinds.pop() if kinds else relation_kind
    vertex_list = list(vertices) if vertices is not None else sorted(endpoints)
    net = RelationNetwork(vertices=vertex_list, edges=edges, relation_kind=kind)
    net.validate()
    return net
