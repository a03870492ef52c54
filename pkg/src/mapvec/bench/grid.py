"""Combination-grid execution over an append-only, fingerprinted results store."""

from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence, Union

from ..errors import UsageError
from ..pipeline.config import PipelineConfig
from .combos import CombinationSpec, enumerate_combinations
from .rank import ResultRow

STORE_NAME = "results_store.csv"
HEADER = ["fingerprint", "combo", "dataset", "task", "metric", "seed", "value", "status"]


def store_path(out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir)
    return path if path.suffix == ".csv" else path / STORE_NAME


def read_store(out_dir: Union[str, Path]) -> list[ResultRow]:
    path = store_path(out_dir)
    if not path.exists():
        return []
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HEADER:
            raise UsageError(f"{path}: unexpected results-store header {reader.fieldnames}")
        for rec in reader:
            rows.append(
                ResultRow(
                    fingerprint=rec["fingerprint"],
                    combo=rec["combo"],
                    dataset=rec["dataset"],
                    task=rec["task"],
                    metric=rec["metric"],
                    seed=int(rec["seed"]),
                    value=float(rec["value"]) if rec["value"] else float("nan"),
                    status=rec["status"],
                )
            )
    return rows


def append_rows(out_dir: Union[str, Path], rows: Sequence[ResultRow]) -> None:
    path = store_path(out_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    new_file = not path.exists()
    with open(path, "a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new_file:
            writer.writerow(HEADER)
        for row in rows:
            value = "" if row.value != row.value else repr(row.value)  # NaN -> empty
            writer.writerow(
                [row.fingerprint, row.combo, row.dataset, row.task, row.metric, row.seed, value, row.status]
            )


def cell_config(base: PipelineConfig, combo: CombinationSpec, seed: int) -> PipelineConfig:
    if combo.entity_kind != base.entity:
        raise UsageError(
            f"combination is for {combo.entity_kind!r} entities, config says {base.entity!r}"
        )
    return replace(
        base,
        stages=combo.stages,
        pretrain_tasks=list(combo.tasks),
        task_weights={},
        seeds=[seed],
        out=None,
    )


def _dataset_name(config: PipelineConfig) -> str:
    if config.dataset is not None:
        return Path(config.dataset).name
    return f"synth{config.synthetic_spec.seed}"


def run_grid(
    base_config: PipelineConfig,
    out_dir: Union[str, Path],
    combos: Optional[Sequence[CombinationSpec]] = None,
    seeds: Optional[Sequence[int]] = None,
) -> list[ResultRow]:
    """Run every (combination, seed) cell, skipping fingerprints already stored.

    Each cell is one single-seed pipeline run; failures are recorded as
    ``failed`` rows and the grid continues. Returns the full store contents.
    """
    from ..pipeline.run import run_pipeline

    base_config.validate()
    combos = list(combos) if combos is not None else enumerate_combinations(base_config.entity)
    seeds = list(seeds) if seeds is not None else list(base_config.seeds)
    dataset_name = _dataset_name(base_config)

    existing = read_store(out_dir)
    done = {row.fingerprint for row in existing}
    for combo in combos:
        for seed in seeds:
            config = cell_config(base_config, combo, seed)
            fingerprint = config.fingerprint()
            if fingerprint in done:
                continue
            try:
                result = run_pipeline(config)
                report = result.reports[seed]
                rows = [
                    ResultRow(
                        fingerprint=fingerprint,
                        combo=combo.name,
                        dataset=dataset_name,
                        task=config.downstream,
                        metric=metric,
                        seed=seed,
                        value=value,
                        status="ok",
                    )
                    for metric, value in sorted(report.values.items())
                ]
            except Exception as exc:  # cell isolation: record and continue
                rows = [
                    ResultRow(
                        fingerprint=fingerprint,
                        combo=combo.name,
                        dataset=dataset_name,
                        task=config.downstream,
                        metric="",
                        seed=seed,
                        value=float("nan"),
                        status=f"failed: {type(exc).__name__}",
                    )
                ]
            append_rows(out_dir, rows)
            done.add(fingerprint)
    return read_store(out_dir)
