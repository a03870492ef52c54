from .combos import AVAILABLE_TASKS, CombinationSpec, enumerate_combinations
from .grid import append_rows, cell_config, read_store, run_grid, store_path
from .profile import EfficiencyRecord, parameter_count, profile
from .rank import ResultRow, avg_rank, dense_ranks, metric_direction, seed_averages
from .report import emit_report

__all__ = [
    "AVAILABLE_TASKS",
    "CombinationSpec",
    "EfficiencyRecord",
    "ResultRow",
    "append_rows",
    "avg_rank",
    "cell_config",
    "dense_ranks",
    "emit_report",
    "enumerate_combinations",
    "metric_direction",
    "parameter_count",
    "profile",
    "read_store",
    "run_grid",
    "seed_averages",
    "store_path",
]
