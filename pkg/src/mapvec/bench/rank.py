"""Dense-rank aggregation of grid results, task- and dataset-oriented."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

from ..errors import UsageError

LOWER_BETTER = {"mae", "mse", "rmse", "mape", "mean_rank"}
# Bookkeeping values that are not quality metrics and never enter rankings.
UNRANKED = {"mape_excluded", "r2_undefined"}


@dataclass(frozen=True)
class ResultRow:
    combo: str
    dataset: str
    task: str
    metric: str
    seed: int
    value: float
    status: str = "ok"
    fingerprint: str = ""


def metric_direction(metric: str) -> int:
    """+1 when higher is better, -1 when lower is better."""
    return -1 if metric in LOWER_BETTER else +1


def seed_averages(rows: Sequence[ResultRow]) -> dict[tuple[str, str, str, str], float]:
    """Mean value per (combo, dataset, task, metric) over seeds."""
    acc: dict[tuple, list[float]] = defaultdict(list)
    for row in rows:
        if row.status != "ok" or row.metric in UNRANKED:
            continue
        acc[(row.combo, row.dataset, row.task, row.metric)].append(row.value)
    return {key: sum(v) / len(v) for key, v in acc.items()}


def dense_ranks(values: dict[str, float], direction: int) -> dict[str, float]:
    """1-based dense ranks; tied values share the same (minimum) rank."""
    distinct = sorted(set(values.values()), reverse=direction > 0)
    rank_of = {v: i + 1 for i, v in enumerate(distinct)}
    return {combo: float(rank_of[v]) for combo, v in values.items()}


def avg_rank(rows: Sequence[ResultRow], orientation: str = "overall") -> dict:
    """Average dense rank of each combination across result cells.

    A cell is one (dataset, task, metric); combinations are seed-averaged and
    then ranked within every cell respecting the metric direction.
    ``task``-oriented output averages cells within each task, ``dataset``
    within each dataset, and ``overall`` over every cell. Every combination
    must cover every cell.
    """
    orientation = orientation.replace("-oriented", "")
    if orientation not in ("task", "dataset", "overall"):
        raise UsageError(f"unknown ranking orientation {orientation!r}")
    means = seed_averages(rows)
    if not means:
        raise UsageError("no usable result rows")
    combos = sorted({combo for combo, *_ in means})
    cells = sorted({(d, t, m) for _, d, t, m in means})
    missing = [
        (combo, cell) for combo in combos for cell in cells if (combo, *cell) not in means
    ]
    if missing:
        listing = "; ".join(f"{c} missing {cell}" for c, cell in missing[:5])
        raise UsageError(f"incomplete result table ({len(missing)} holes): {listing}")

    cell_ranks: dict[tuple, dict[str, float]] = {}
    for cell in cells:
        values = {combo: means[(combo, *cell)] for combo in combos}
        cell_ranks[cell] = dense_ranks(values, metric_direction(cell[2]))

    def average_over(selected_cells):
        return {
            combo: sum(cell_ranks[cell][combo] for cell in selected_cells) / len(selected_cells)
            for combo in combos
        }

    if orientation == "overall":
        return average_over(cells)
    if orientation == "task":
        return {
            task: average_over([c for c in cells if c[1] == task])
            for task in sorted({t for _, t, _ in cells})
        }
    return {
        dataset: average_over([c for c in cells if c[0] == dataset])
        for dataset in sorted({d for d, _, _ in cells})
    }
