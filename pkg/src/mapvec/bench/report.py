"""Render ranking tables (markdown + CSV) from a results store."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ..errors import UsageError
from .rank import ResultRow, UNRANKED, avg_rank, metric_direction


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def rebuild_run_report(run_dir: Union[str, Path], out_dir: Union[str, Path]) -> list[Path]:
    """Recompute a run's aggregated result.csv from its per-seed rows."""
    import csv

    run_dir = Path(run_dir)
    seeds_csv = run_dir / "result_seeds.csv"
    if not seeds_csv.exists():
        raise UsageError(f"{run_dir}: no result_seeds.csv or results store found")
    per_metric: dict[tuple[str, str], list[float]] = defaultdict(list)
    with open(seeds_csv, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["task", "metric", "seed", "value"]:
            raise UsageError(f"{seeds_csv}: unexpected header {reader.fieldnames}")
        for rec in reader:
            per_metric[(rec["task"], rec["metric"])].append(float(rec["value"]))

    from ..pipeline.run import csv_line

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["task,metric,mean,std,n_seeds"]
    for (task, metric) in sorted(per_metric):
        mean, std = _mean_std(per_metric[(task, metric)])
        rows.append(csv_line((task, metric, mean, std, len(per_metric[(task, metric)]))))
    path = out / "result.csv"
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return [path]


def emit_report(rows: Sequence[ResultRow], out_dir: Union[str, Path]) -> list[Path]:
    """Write one markdown + CSV table per task; best value per row bolded.

    Columns are combinations, rows are (dataset, metric) cells showing
    mean +/- std over seeds, and a final "Per Avg Rank" row carries each
    combination's overall average dense rank. Output is byte-deterministic.
    """
    ok_rows = [r for r in rows if r.status == "ok" and r.metric not in UNRANKED]
    if not ok_rows:
        raise UsageError("no successful result rows to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    written = []
    tasks = sorted({r.task for r in ok_rows})
    for task in tasks:
        task_rows = [r for r in ok_rows if r.task == task]
        combos = sorted({r.combo for r in task_rows})
        cells = sorted({(r.dataset, r.metric) for r in task_rows})
        stats: dict[tuple, dict[str, tuple[float, float]]] = defaultdict(dict)
        for (dataset, metric) in cells:
            for combo in combos:
                values = [
                    r.value for r in task_rows
                    if r.combo == combo and r.dataset == dataset and r.metric == metric
                ]
                if values:
                    stats[(dataset, metric)][combo] = _mean_std(values)

        ranks = avg_rank(task_rows, orientation="overall")

        md = [f"# {task} results", "", "| dataset | metric | " + " | ".join(combos) + " |"]
        md.append("|" + "---|" * (2 + len(combos)))
        csv_lines = ["dataset,metric,combo,mean,std"]
        for (dataset, metric) in cells:
            combo_stats = stats[(dataset, metric)]
            present = {c: ms for c, ms in combo_stats.items()}
            direction = metric_direction(metric)
            best = max(present.values(), key=lambda ms: direction * ms[0])[0] if present else None
            row = [dataset, metric]
            for combo in combos:
                if combo not in present:
                    row.append("-")
                    continue
                mean, std = present[combo]
                cell = f"{mean:.4f}±{std:.4f}"
                if mean == best:
                    cell = f"**{cell}**"
                row.append(cell)
                csv_lines.append(f"{dataset},{metric},{combo},{mean!r},{std!r}")
            md.append("| " + " | ".join(row) + " |")
        rank_cells = [f"{ranks[c]:.4f}" for c in combos]
        md.append("| - | Per Avg Rank | " + " | ".join(rank_cells) + " |")
        for combo in combos:
            csv_lines.append(f"-,avg_rank,{combo},{ranks[combo]!r},0.0")

        md_path = out / f"report_{task}.md"
        md_path.write_text("\n".join(md) + "\n", encoding="utf-8")
        csv_path = out / f"report_{task}.csv"
        csv_path.write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
        written.extend([md_path, csv_path])
    return written
