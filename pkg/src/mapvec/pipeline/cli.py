"""Command-line interface: convert, validate, synth, run, grid, report."""

from __future__ import annotations

import argparse
import json
import sys

from pathlib import Path

from ..data.convert import convert_standard
from ..data.model import validate_dataset
from ..data.store import load_dataset, save_dataset
from ..data.synth import SyntheticCitySpec, generate_synthetic_city
from ..errors import MapvecError
from .config import load_config
from .run import run_pipeline, write_outputs

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapvec", description="Map-entity representation learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert GeoJSON + trajectory CSV to atomic files")
    p.add_argument("--geo", action="append", required=True, help="GeoJSON input (repeatable)")
    p.add_argument("--traj", help="trajectory CSV input")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--city", default="converted")
    p.add_argument("--crs", default="EPSG:4326")

    p = sub.add_parser("validate", help="validate a dataset directory")
    p.add_argument("--data", required=True, help="dataset directory")

    p = sub.add_parser("synth", help="generate a synthetic city")
    p.add_argument("--spec", required=True, help="JSON file with the city spec")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("run", help="run a configured experiment")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--out", help="override the config's output directory")

    p = sub.add_parser("grid", help="run the pretraining-combination grid")
    p.add_argument("--config", required=True, help="base pipeline config JSON")
    p.add_argument("--out", required=True, help="results-store directory")

    p = sub.add_parser("report", help="render ranking tables from a results store")
    p.add_argument("--results", required=True, help="results-store directory or CSV")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    try:
        if args.command == "convert":
            written = convert_standard(args.geo, args.traj, args.out, city=args.city, crs=args.crs)
            for path in written:
                print(path)
            return EXIT_OK

        if args.command == "validate":
            dataset = load_dataset(args.data)
            violations = validate_dataset(dataset)
            for v in violations:
                print(f"{v.kind}: {v.message}", file=sys.stderr)
            print(f"{len(violations)} violation(s)")
            return EXIT_VALIDATION if violations else EXIT_OK

        if args.command == "synth":
            spec_doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
            spec = SyntheticCitySpec(**spec_doc)
            dataset = generate_synthetic_city(spec)
            out = save_dataset(dataset, args.out)
            print(f"wrote {dataset.metadata.city} dataset to {out}")
            return EXIT_OK

        if args.command == "run":
            config = load_config(args.config)
            if args.out:
                config.out = args.out
            result = run_pipeline(config)
            if config.out:
                write_outputs(result, Path(config.out))
            print(f"fingerprint {result.fingerprint}")
            print(f"result hash {result.content_hash()}")
            for task, metric, mean, std, n in result.aggregate_rows():
                print(f"{task} {metric}: {mean:.6g} +/- {std:.6g} (n={n})")
            return EXIT_OK

        if args.command == "grid":
            from ..bench.grid import run_grid

            config = load_config(args.config)
            store = run_grid(config, args.out)
            done = sum(1 for row in store if row.status == "ok")
            failed = sum(1 for row in store if row.status.startswith("failed"))
            print(f"grid complete: {done} ok rows, {failed} failed rows")
            return EXIT_OK

        if args.command == "report":
            from ..bench.grid import read_store, store_path
            from ..bench.report import emit_report, rebuild_run_report

            results = Path(args.results)
            if store_path(results).exists():
                written = emit_report(read_store(results), args.out)
            else:
                # A single-run output directory: rebuild result.csv from the
                # per-seed rows.
                written = rebuild_run_report(results, args.out)
            for path in written:
                print(path)
            return EXIT_OK

    except MapvecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if args.command == "validate" else EXIT_USAGE
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    return EXIT_USAGE


def main() -> None:
    sys.exit(cli())
