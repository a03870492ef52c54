"""Core data model: map entities, trajectories, relation networks, datasets.

Coordinates are WGS84 degrees, ordered [longitude, latitude] everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Union

from ..errors import IntegrityError

ENTITY_KINDS = ("point", "polyline", "polygon")
RELATION_KINDS = ("geographical", "social")

FeatureValue = Union[str, float]
Coord = tuple[float, float]
# Check-in samples carry an entity id, coordinate samples a (lon, lat) pair.
Location = Union[str, Coord]


@dataclass
class MapEntity:
    """One map object: a POI point, road-segment polyline, or parcel polygon."""

    id: str
    kind: str
    geometry: list[Coord]
    features: dict[str, FeatureValue] = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in ENTITY_KINDS:
            raise IntegrityError(f"entity {self.id}: unknown kind {self.kind!r}")
        n = len(self.geometry)
        if self.kind == "point" and n != 1:
            raise IntegrityError(f"entity {self.id}: point needs exactly 1 coordinate, got {n}")
        if self.kind == "polyline" and n < 2:
            raise IntegrityError(f"entity {self.id}: polyline needs >= 2 coordinates, got {n}")
        if self.kind == "polygon":
            if n < 4:
                raise IntegrityError(f"entity {self.id}: polygon ring needs >= 4 coordinates, got {n}")
            if self.geometry[0] != self.geometry[-1]:
                raise IntegrityError(f"entity {self.id}: polygon ring is not closed")
        for lon, lat in self.geometry:
            if not (-180.0 <= lon <= 180.0) or not (-90.0 <= lat <= 90.0):
                raise IntegrityError(f"entity {self.id}: coordinate ({lon}, {lat}) out of WGS84 range")

    def representative_point(self) -> Coord:
        """Centroid of the coordinate list (ring closure point excluded for polygons)."""
        coords = self.geometry
        if self.kind == "polygon":
            coords = coords[:-1]
        lon = sum(c[0] for c in coords) / len(coords)
        lat = sum(c[1] for c in coords) / len(coords)
        return (lon, lat)


@dataclass
class Trajectory:
    """Ordered (location, timestamp) samples for one trip.

    ``variant`` is "checkin" (locations are entity ids) or "coordinate"
    (locations are (lon, lat) pairs).
    """

    id: str
    user: Optional[str]
    samples: list[tuple[Location, datetime]]
    variant: str

    def __len__(self) -> int:
        return len(self.samples)

    def locations(self) -> list[Location]:
        return [loc for loc, _ in self.samples]

    def timestamps(self) -> list[datetime]:
        return [t for _, t in self.samples]

    def validate(self) -> None:
        if self.variant not in ("checkin", "coordinate"):
            raise IntegrityError(f"trajectory {self.id}: unknown variant {self.variant!r}")
        if not self.samples:
            raise IntegrityError(f"trajectory {self.id}: empty sample list")
        for loc, _ in self.samples:
            is_checkin = isinstance(loc, str)
            if is_checkin != (self.variant == "checkin"):
                raise IntegrityError(
                    f"trajectory {self.id}: sample location type does not match variant {self.variant!r}"
                )
        times = self.timestamps()
        for a, b in zip(times, times[1:]):
            if b < a:
                raise IntegrityError(f"trajectory {self.id}: timestamps decrease at {b.isoformat()}")


@dataclass
class RelationNetwork:
    """Directed weighted graph over entities."""

    vertices: list[str]
    edges: dict[tuple[str, str], float]
    relation_kind: str

    def validate(self) -> None:
        if self.relation_kind not in RELATION_KINDS:
            raise IntegrityError(f"unknown relation kind {self.relation_kind!r}")
        vset = set(self.vertices)
        if len(vset) != len(self.vertices):
            raise IntegrityError("duplicate vertices in relation network")
        for (o, d), w in self.edges.items():
            if o not in vset or d not in vset:
                raise IntegrityError(f"edge ({o}, {d}) references undeclared vertex")
            if w < 0:
                raise IntegrityError(f"edge ({o}, {d}) has negative weight {w}")

    def out_neighbors(self, v: str) -> list[str]:
        return [d for (o, d) in self.edges if o == v]


@dataclass
class DatasetMeta:
    city: str
    crs: str = "EPSG:4326"
    entity_kind: str = "mixed"
    # CRS declared by each source file/component, checked against ``crs``.
    source_crs: dict[str, str] = field(default_factory=dict)


@dataclass
class Violation:
    """One validation finding; ``kind`` is a stable machine-readable tag."""

    kind: str
    message: str


@dataclass
class Dataset:
    """Aggregate of the three atomic-file collections plus metadata."""

    entities: list[MapEntity]
    trajectories: list[Trajectory]
    networks: dict[str, RelationNetwork]
    metadata: DatasetMeta

    def entity_index(self) -> dict[str, MapEntity]:
        return {e.id: e for e in self.entities}

    def entities_of_kind(self, kind: str) -> list[MapEntity]:
        return [e for e in self.entities if e.kind == kind]

    def trajectories_over(self, kind: str) -> list[Trajectory]:
        """Check-in trajectories whose samples reference entities of ``kind``."""
        by_id = self.entity_index()
        out = []
        for tr in self.trajectories:
            if tr.variant != "checkin":
                continue
            first = tr.samples[0][0]
            ent = by_id.get(first)  # type: ignore[arg-type]
            if ent is not None and ent.kind == kind:
                out.append(tr)
        return out


def validate_dataset(dataset: Dataset) -> list[Violation]:
    """Cross-file consistency report: returns violations instead of raising.

    Checks id references (trajectory check-ins, network vertices), agreement
    of per-source CRS tags with the dataset CRS, and feature completeness
    (every entity of a kind carries the same non-missing feature set).
    """
    violations: list[Violation] = []
    ids = set()
    for e in dataset.entities:
        if e.id in ids:
            violations.append(Violation("duplicate-id", f"entity id {e.id} repeated"))
        ids.add(e.id)

    for tr in dataset.trajectories:
        if tr.variant != "checkin":
            continue
        for loc, _ in tr.samples:
            if loc not in ids:
                violations.append(
                    Violation("dangling-reference", f"trajectory {tr.id} references unknown entity {loc}")
                )

    for name, net in dataset.networks.items():
        for v in net.vertices:
            if v not in ids:
                violations.append(
                    Violation("dangling-reference", f"network {name} declares unknown vertex {v}")
                )

    for source, tag in sorted(dataset.metadata.source_crs.items()):
        if tag != dataset.metadata.crs:
            violations.append(
                Violation("crs-mismatch", f"source {source} uses {tag}, dataset uses {dataset.metadata.crs}")
            )

    # Feature completeness within each entity kind.
    keys_by_kind: dict[str, set[str]] = {}
    for e in dataset.entities:
        keys_by_kind.setdefault(e.kind, set()).update(e.features.keys())
    for e in dataset.entities:
        expected = keys_by_kind[e.kind]
        for k in sorted(expected):
            if k not in e.features or e.features[k] is None:
                violations.append(
                    Violation("missing-feature", f"entity {e.id} is missing feature {k!r}")
                )

    return violations
