"""Conversion from standard formats (GeoJSON, trajectory CSV) to atomic files.

The trajectory CSV input uses the same columns as the .traj atomic format
(`traj_id,step,user_id,entity_id,lon,lat,time`); the converter validates it
and rewrites everything canonically. GeoJSON features must carry an ``id``
property; all other properties become entity features.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional, Union

from ..errors import FormatError, IntegrityError
from .atomic import load_traj, save_geo, save_rel, save_traj
from .model import MapEntity, Trajectory
from .networks import build_od_network

_GEOJSON_KIND = {"Point": "point", "LineString": "polyline", "Polygon": "polygon"}


def _crs_of(doc: dict) -> Optional[str]:
    crs = doc.get("crs")
    if crs is None:
        return None
    props = crs.get("properties", {})
    if "name" in props:
        return str(props["name"])
    if "code" in props:
        return f"{crs.get('type', 'EPSG')}:{props['code']}"
    return None


def parse_geojson(path: Union[str, Path], expected_crs: str = "EPSG:4326") -> list[MapEntity]:
    """Read one GeoJSON FeatureCollection into map entities."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("type") != "FeatureCollection":
        raise FormatError(f"{path}: expected a FeatureCollection")
    declared = _crs_of(doc)
    if declared is not None and declared != expected_crs:
        raise IntegrityError(f"{path}: declares CRS {declared}, dataset uses {expected_crs}")

    entities = []
    for n, feat in enumerate(doc.get("features", [])):
        props = dict(feat.get("properties") or {})
        ent_id = props.pop("id", feat.get("id"))
        if ent_id is None:
            raise FormatError(f"{path}: feature {n} has no id property")
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        if gtype not in _GEOJSON_KIND:
            raise FormatError(f"{path}: feature {ent_id}: unsupported geometry type {gtype!r}")
        coords = geom.get("coordinates")
        try:
            if gtype == "Point":
                geometry = [(float(coords[0]), float(coords[1]))]
            elif gtype == "LineString":
                geometry = [(float(c[0]), float(c[1])) for c in coords]
            else:  # Polygon: exterior ring only
                geometry = [(float(c[0]), float(c[1])) for c in coords[0]]
        except (TypeError, ValueError, IndexError) as exc:
            raise FormatError(f"{path}: feature {ent_id}: malformed coordinates") from exc
        features = {
            k: float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else str(v)
            for k, v in props.items()
        }
        entity = MapEntity(id=str(ent_id), kind=_GEOJSON_KIND[gtype], geometry=geometry, features=features)
        entity.validate()
        entities.append(entity)
    return entities


def convert_standard(
    geo_inputs: Iterable[Union[str, Path]],
    traj_input: Optional[Union[str, Path]],
    out_dir: Union[str, Path],
    city: str = "converted",
    crs: str = "EPSG:4326",
) -> list[Path]:
    """Convert GeoJSON files plus an optional trajectory CSV to atomic files.

    Writes ``city.geo``, ``city.traj`` (when trajectories are given), and a
    derived OD ``city.od.rel`` when the trajectories are check-in variant.
    Returns the written paths in a deterministic order.
    """
    entities: list[MapEntity] = []
    seen: set[str] = set()
    declared_crs: dict[str, str] = {}
    for path in geo_inputs:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        tag = _crs_of(doc)
        if tag is not None:
            declared_crs[str(path)] = tag
        for ent in parse_geojson(path, expected_crs=crs):
            if ent.id in seen:
                raise IntegrityError(f"duplicate entity id {ent.id} across GeoJSON inputs")
            seen.add(ent.id)
            entities.append(ent)
    if len(set(declared_crs.values())) > 1:
        raise IntegrityError(f"inconsistent CRS declarations across inputs: {sorted(set(declared_crs.values()))}")

    trajectories: list[Trajectory] = []
    if traj_input is not None:
        trajectories = load_traj(traj_input)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    geo_path = out / f"{city}.geo"
    save_geo(entities, geo_path)
    written.append(geo_path)

    networks = {}
    if trajectories:
        traj_path = out / f"{city}.traj"
        save_traj(trajectories, traj_path)
        written.append(traj_path)
        checkins = [tr for tr in trajectories if tr.variant == "checkin"]
        if checkins and len(checkins) == len(trajectories):
            od = build_od_network(checkins, entities)
            rel_path = out / f"{city}.od.rel"
            save_rel(od, rel_path)
            written.append(rel_path)
            networks["od"] = od

    meta = {
        "city": city,
        "crs": crs,
        "entity_kind": "mixed",
        "source_crs": declared_crs,
        "networks": {name: net.relation_kind for name, net in sorted(networks.items())},
    }
    meta_path = out / f"{city}.meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(meta_path)
    return written
