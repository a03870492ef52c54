"""Evaluation metrics for regression, classification, and retrieval tasks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import UsageError


@dataclass
class MetricReport:
    task: str
    values: dict[str, float]
    n_samples: int
    seed: int = 0

    def __post_init__(self):
        if self.n_samples <= 0:
            raise UsageError("metric report needs a positive sample count")
        for name, v in self.values.items():
            if not math.isfinite(v):
                raise UsageError(f"metric {name} is not finite: {v}")


def regression_metrics(preds: Sequence[float], truths: Sequence[float]) -> dict[str, float]:
    """MAE, MSE, RMSE, R2, and MAPE (percent).

    Zero-truth rows are excluded from MAPE and counted in ``mape_excluded``.
    When the truths are constant, R2 is undefined (zero total variance) and
    reported via ``r2_undefined`` instead of an ``r2`` value.
    """
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1 or len(p) == 0:
        raise UsageError("predictions and truths must be equal-length nonempty vectors")
    err = p - t
    out: dict[str, float] = {
        "mae": float(np.abs(err).mean()),
        "mse": float((err**2).mean()),
        "rmse": float(np.sqrt((err**2).mean())),
    }
    nonzero = t != 0
    out["mape_excluded"] = float((~nonzero).sum())
    if nonzero.any():
        out["mape"] = float((np.abs(err[nonzero] / t[nonzero])).mean() * 100.0)
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0.0:
        out["r2_undefined"] = 1.0
    else:
        out["r2"] = 1.0 - float((err**2).sum()) / ss_tot
    return out


def _truth_ranks(scores, truths, candidate_ids):
    """1-based rank of each item's truth; ties broken by smaller candidate id."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or len(truths) != s.shape[0]:
        raise UsageError("scores must be (n_items, n_candidates) aligned with truths")
    if candidate_ids is None:
        candidate_ids = list(range(s.shape[1]))
    pos = {c: i for i, c in enumerate(candidate_ids)}
    ranks = np.empty(s.shape[0], dtype=np.int64)
    top1 = []
    for i, truth in enumerate(truths):
        if truth not in pos:
            raise UsageError(f"truth {truth!r} is not among the candidates")
        order = sorted(range(s.shape[1]), key=lambda c: (-s[i, c], candidate_ids[c]))
        ranks[i] = order.index(pos[truth]) + 1
        top1.append(candidate_ids[order[0]])
    return ranks, top1


def classification_metrics(
    scores,
    truths: Sequence,
    ks: Sequence[int] = (1, 5),
    candidate_ids: Optional[Sequence] = None,
) -> dict[str, float]:
    """Accuracy@k, macro Recall@k, macro F1 (from top-1), and Mean Rank."""
    n_candidates = np.asarray(scores).shape[1]
    for k in ks:
        if k > n_candidates:
            raise UsageError(f"k={k} exceeds the candidate count {n_candidates}")
    ranks, top1 = _truth_ranks(scores, truths, candidate_ids)
    out: dict[str, float] = {"mean_rank": float(ranks.mean())}
    classes = sorted(set(truths))
    for k in ks:
        hit = ranks <= k
        out[f"acc@{k}"] = float(hit.mean())
        per_class = []
        for c in classes:
            members = [i for i, t in enumerate(truths) if t == c]
            per_class.append(float(hit[members].mean()))
        out[f"recall@{k}"] = float(np.mean(per_class))
    f1s = []
    for c in classes:
        tp = sum(1 for t, p in zip(truths, top1) if t == c and p == c)
        fp = sum(1 for t, p in zip(truths, top1) if t != c and p == c)
        fn = sum(1 for t, p in zip(truths, top1) if t == c and p != c)
        f1s.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    out["f1_macro"] = float(np.mean(f1s))
    return out


def sts_metrics(
    rankings: Sequence[Sequence],
    truths: Sequence,
    ks: Sequence[int] = (1, 5),
) -> dict[str, float]:
    """Accuracy@k and Mean Rank over pre-ranked retrieval lists."""
    if len(rankings) != len(truths) or not rankings:
        raise UsageError("rankings and truths must be equal-length and nonempty")
    ranks = []
    for ranked, truth in zip(rankings, truths):
        ranked = list(ranked)
        if truth not in ranked:
            raise UsageError(f"truth {truth!r} missing from its ranking")
        ranks.append(ranked.index(truth) + 1)
    ranks_arr = np.asarray(ranks)
    for k in ks:
        if k > max(len(r) for r in rankings):
            raise UsageError(f"k={k} exceeds the database size")
    out = {f"acc@{k}": float((ranks_arr <= k).mean()) for k in ks}
    out["mean_rank"] = float(ranks_arr.mean())
    return out


def aggregate_seeds(reports: Sequence[MetricReport]) -> dict[str, tuple[float, float]]:
    """Per-metric mean and population standard deviation across seed reports."""
    if not reports:
        raise UsageError("need at least one report")
    keys = sorted(reports[0].values.keys())
    for r in reports[1:]:
        if sorted(r.values.keys()) != keys:
            raise UsageError("reports carry heterogeneous metric keys")
    out = {}
    for key in keys:
        vals = np.asarray([r.values[key] for r in reports], dtype=np.float64)
        out[key] = (float(vals.mean()), float(vals.std()))
    return out


def report_rows(task: str, aggregated: dict[str, tuple[float, float]], n_seeds: int):
    """Rows of `task,metric,mean,std,n_seeds` for CSV emission."""
    return [(task, metric, mean, std, n_seeds) for metric, (mean, std) in sorted(aggregated.items())]
