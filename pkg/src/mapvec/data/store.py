"""Dataset-level persistence: one .geo, one .traj, one .rel per network.

Layout under a directory, for a dataset named ``city``:

    city.geo
    city.traj
    city.<network-name>.rel
    city.meta.json

The meta file records the city name, CRS tag, entity kind, and network names
so a directory round-trips to an identical in-memory Dataset.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from ..errors import FormatError
from .atomic import load_geo, load_rel, load_traj, save_geo, save_rel, save_traj
from .model import Dataset, DatasetMeta


def save_dataset(dataset: Dataset, out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    city = dataset.metadata.city
    save_geo(dataset.entities, out / f"{city}.geo")
    save_traj(dataset.trajectories, out / f"{city}.traj")
    for name, net in sorted(dataset.networks.items()):
        save_rel(net, out / f"{city}.{name}.rel")
    meta = {
        "city": city,
        "crs": dataset.metadata.crs,
        "entity_kind": dataset.metadata.entity_kind,
        "source_crs": dataset.metadata.source_crs,
        "networks": {name: net.relation_kind for name, net in sorted(dataset.networks.items())},
    }
    (out / f"{city}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def load_dataset(path: Union[str, Path]) -> Dataset:
    """Load a dataset directory written by :func:`save_dataset`."""
    root = Path(path)
    metas = sorted(root.glob("*.meta.json"))
    if not metas:
        raise FormatError(f"{root}: no *.meta.json found")
    meta = json.loads(metas[0].read_text(encoding="utf-8"))
    city = meta["city"]
    entities = load_geo(root / f"{city}.geo")
    traj_path = root / f"{city}.traj"
    trajectories = load_traj(traj_path) if traj_path.exists() else []
    vertices_by_kind = {}
    networks = {}
    declared = meta.get("networks", {})
    names = declared.keys() if isinstance(declared, dict) else declared
    for name in names:
        relation_kind = declared[name] if isinstance(declared, dict) else "geographical"
        net = load_rel(root / f"{city}.{name}.rel", relation_kind=relation_kind)
        # Restore the full vertex set: .rel rows only cover endpoint vertices.
        kind_vertices = _vertices_for(net, entities, vertices_by_kind)
        net.vertices = kind_vertices
        networks[name] = net
    return Dataset(
        entities=entities,
        trajectories=trajectories,
        networks=networks,
        metadata=DatasetMeta(
            city=city,
            crs=meta.get("crs", "EPSG:4326"),
            entity_kind=meta.get("entity_kind", "mixed"),
            source_crs=meta.get("source_crs", {}),
        ),
    )


def _vertices_for(net, entities, cache) -> list[str]:
    """Expand a network's vertex list to every entity of the kinds it touches."""
    by_id = {e.id: e.kind for e in entities}
    kinds = sorted({by_id[v] for v in net.vertices if v in by_id})
    key = tuple(kinds)
    if key not in cache:
        cache[key] = [e.id for e in entities if e.kind in kinds]
    return cache[key]
