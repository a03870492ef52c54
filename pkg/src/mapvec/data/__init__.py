from .atomic import load_geo, load_rel, load_traj, save_geo, save_rel, save_traj
from .convert import convert_standard, parse_geojson
from .model import (
    Dataset,
    DatasetMeta,
    MapEntity,
    RelationNetwork,
    Trajectory,
    Violation,
    validate_dataset,
)
from .networks import build_geo_network, build_od_network, haversine_m
from .preprocess import preprocess_checkin, preprocess_coordinate, split_dataset
from .store import load_dataset, save_dataset
from .synth import SyntheticCitySpec, generate_synthetic_city, parcel_of_point, point_in_polygon

__all__ = [
    "Dataset",
    "DatasetMeta",
    "MapEntity",
    "RelationNetwork",
    "Trajectory",
    "Violation",
    "SyntheticCitySpec",
    "build_geo_network",
    "build_od_network",
    "convert_standard",
    "generate_synthetic_city",
    "haversine_m",
    "load_dataset",
    "load_geo",
    "load_rel",
    "load_traj",
    "parcel_of_point",
    "parse_geojson",
    "point_in_polygon",
    "preprocess_checkin",
    "preprocess_coordinate",
    "save_dataset",
    "save_geo",
    "save_rel",
    "save_traj",
    "split_dataset",
    "validate_dataset",
]
