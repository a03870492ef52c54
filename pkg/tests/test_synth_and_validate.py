"""Synthetic city generator, dataset validation, and format conversion."""

import hashlib
import json

import pytest

from mapvec.data import (
    SyntheticCitySpec,
    convert_standard,
    generate_synthetic_city,
    load_dataset,
    load_geo,
    parcel_of_point,
    parse_geojson,
    point_in_polygon,
    save_dataset,
    validate_dataset,
)
from mapvec.errors import IntegrityError, UsageError

SPEC = SyntheticCitySpec(grid_rows=4, grid_cols=4, n_pois=50, n_users=10, n_trajectories=120, n_categories=4, seed=11)


def dataset_bytes_hash(spec, tmp_path, tag):
    ds = generate_synthetic_city(spec)
    out = tmp_path / tag
    save_dataset(ds, out)
    h = hashlib.blake2b()
    for f in sorted(out.iterdir()):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()


class TestSyntheticCity:
    def test_byte_identical_for_same_seed(self, tmp_path):
        assert dataset_bytes_hash(SPEC, tmp_path, "a") == dataset_bytes_hash(SPEC, tmp_path, "b")

    def test_grid_4x4_counts(self):
        ds = generate_synthetic_city(SPEC)
        assert len(ds.entities_of_kind("polygon")) == 16
        # Undirected grid-graph edge count: 2*r*c - r - c.
        assert len(ds.entities_of_kind("polyline")) == 2 * 4 * 4 - 4 - 4
        assert len(ds.entities_of_kind("point")) == 50

    def test_single_category(self):
        spec = SyntheticCitySpec(grid_rows=3, grid_cols=3, n_pois=20, n_users=5, n_trajectories=30,
                                 n_categories=1, seed=3)
        ds = generate_synthetic_city(spec)
        cats = {e.features["category"] for e in ds.entities_of_kind("point")}
        assert cats == {"cat_00"}

    def test_capacity_error(self):
        with pytest.raises(UsageError, match="distinct home POI"):
            generate_synthetic_city(SyntheticCitySpec(n_pois=5, n_users=6))

    def test_self_consistent(self):
        assert validate_dataset(generate_synthetic_city(SPEC)) == []

    def test_category_follows_cell(self):
        ds = generate_synthetic_city(SPEC)
        parcels = ds.entities_of_kind("polygon")
        for poi in ds.entities_of_kind("point"):
            pid = parcel_of_point(poi.geometry[0], parcels)
            assert pid is not None
            zone = int(pid[1:])
            assert poi.features["category"] == f"cat_{zone % 4:02d}"

    def test_trajectories_selectable_by_kind(self):
        ds = generate_synthetic_city(SPEC)
        assert len(ds.trajectories_over("point")) == 120
        assert len(ds.trajectories_over("polyline")) == 120

    def test_round_trips_through_store(self, tmp_path):
        ds = generate_synthetic_city(SPEC)
        save_dataset(ds, tmp_path / "city")
        ds2 = load_dataset(tmp_path / "city")
        assert ds2.entities == ds.entities
        assert ds2.trajectories == ds.trajectories
        assert ds2.networks == ds.networks
        assert ds2.metadata == ds.metadata


class TestValidateDataset:
    def test_dangling_trajectory_reference(self):
        ds = generate_synthetic_city(SPEC)
        ds.trajectories[0].samples[0] = ("ghost", ds.trajectories[0].samples[0][1])
        report = validate_dataset(ds)
        assert [v.kind for v in report] == ["dangling-reference"]

    def test_injected_violations_counted(self):
        ds = generate_synthetic_city(SPEC)
        del ds.entities[0].features["block"]
        ds.metadata.source_crs["geo"] = "EPSG:3857"
        report = validate_dataset(ds)
        assert len(report) == 2
        assert {v.kind for v in report} == {"missing-feature", "crs-mismatch"}


class TestPointInPolygon:
    def test_unit_square(self):
        ring = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)]
        assert point_in_polygon((0.5, 0.5), ring)
        assert not point_in_polygon((1.5, 0.5), ring)


class TestConvertStandard:
    def make_geojson(self, tmp_path, crs=None, n=2):
        features = []
        for i in range(n):
            features.append(
                {
                    "type": "Feature",
                    "properties": {"id": f"g{i}", "category": "shop", "score": float(i)},
                    "geometry": {"type": "Point", "coordinates": [10.0 + i * 0.001, 50.0]},
                }
            )
        doc = {"type": "FeatureCollection", "features": features}
        if crs is not None:
            doc["crs"] = {"type": "name", "properties": {"name": crs}}
        path = tmp_path / "in.geojson"
        path.write_text(json.dumps(doc))
        return path

    def test_two_points_to_two_rows(self, tmp_path):
        src = self.make_geojson(tmp_path)
        convert_standard([src], None, tmp_path / "out", city="c")
        entities = load_geo(tmp_path / "out" / "c.geo")
        assert len(entities) == 2
        assert entities[0].features == {"category": "shop", "score": 0.0}

    def test_convert_then_load_equals_direct_parse(self, tmp_path):
        src = self.make_geojson(tmp_path, n=5)
        convert_standard([src], None, tmp_path / "out", city="c")
        assert load_geo(tmp_path / "out" / "c.geo") == parse_geojson(src)

    def test_crs_mismatch_rejected(self, tmp_path):
        src = self.make_geojson(tmp_path, crs="EPSG:3857")
        with pytest.raises(IntegrityError, match="CRS"):
            convert_standard([src], None, tmp_path / "out", city="c")

    def test_missing_id_rejected(self, tmp_path):
        doc = {
            "type": "FeatureCollection",
            "features": [
                {"type": "Feature", "properties": {}, "geometry": {"type": "Point", "coordinates": [1.0, 2.0]}}
            ],
        }
        path = tmp_path / "noid.geojson"
        path.write_text(json.dumps(doc))
        from mapvec.errors import FormatError

        with pytest.raises(FormatError, match="no id"):
            convert_standard([path], None, tmp_path / "out")

    def test_trajectory_csv_passthrough(self, tmp_path):
        src = self.make_geojson(tmp_path)
        traj_csv = tmp_path / "in.csv"
        traj_csv.write_text(
            "traj_id,step,user_id,entity_id,lon,lat,time\n"
            "t1,0,u1,g0,,,2024-01-01T08:00:00Z\n"
            "t1,1,u1,g1,,,2024-01-01T09:00:00Z\n"
        )
        written = convert_standard([src], traj_csv, tmp_path / "out", city="c")
        names = sorted(p.name for p in written)
        assert names == ["c.geo", "c.meta.json", "c.od.rel", "c.traj"]
        ds = load_dataset(tmp_path / "out")
        assert len(ds.trajectories) == 1
        assert ds.networks["od"].edges == {("g0", "g1"): 1.0}
