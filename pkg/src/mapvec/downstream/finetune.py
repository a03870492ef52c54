"""Fine-tuning strategies and task evaluation.

``downstream-only`` optimizes the task head against frozen encoder outputs,
leaving every encoder parameter bit-identical; ``end-to-end`` optimizes the
head and the encoder stack together. Validation-based model selection keeps
the best-scoring parameter snapshot seen during the budget.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..encoders.pipeline import EncoderPipeline
from ..errors import UsageError
from ..metrics import MetricReport, classification_metrics, regression_metrics, sts_metrics
from ..pretrain.losses import info_nce, masked_mean, pad_batch
from .sts import sts_index, sts_query
from .tasks import DownstreamTask

STRATEGIES = ("downstream-only", "end-to-end")


@dataclass
class EncodeContext:
    """Encoder-side tensors for one entity kind, in entities_of_kind row order."""

    entity_kind: str
    feature_idx: torch.Tensor
    adjacency: Optional[torch.Tensor] = None


def entity_representations(pipeline: EncoderPipeline, ctx: EncodeContext, frozen: bool) -> torch.Tensor:
    if frozen:
        with torch.no_grad():
            return pipeline.encode_entities(ctx.feature_idx, ctx.adjacency)
    return pipeline.encode_entities(ctx.feature_idx, ctx.adjacency)


def _pooled_sequences(pipeline, reps, row_lists, slot_lists, causal=False):
    idx, slots, lengths = pad_batch(row_lists, slot_lists)
    states = pipeline.encode_positions(reps, idx, slots=slots, lengths=lengths, causal=causal)
    return masked_mean(states, lengths), states, lengths


def task_outputs(pipeline: EncoderPipeline, task: DownstreamTask, reps: torch.Tensor, items: Sequence):
    """Model outputs for a batch of task items (logits, predictions, or vectors)."""
    kind = task.kind
    if kind in ("poic", "lpc"):
        rows = torch.tensor([i for i, _ in items])
        return task.head(reps[rows])
    if kind == "asi":
        rows = torch.tensor([i for i, _ in items])
        return task.head(reps[rows]).squeeze(-1)
    if kind == "fi":
        rows = torch.tensor([i for i, _, _ in items])
        return task.head(reps[rows])
    if kind == "mi":
        ri = torch.tensor([i for i, _, _ in items])
        rj = torch.tensor([j for _, j, _ in items])
        return task.head(reps[ri], reps[rj])
    if kind == "npp":
        prefix_rows = [it[0] for it in items]
        prefix_slots = [it[1] for it in items]
        idx, slots, lengths = pad_batch(prefix_rows, prefix_slots)
        states = pipeline.encode_positions(reps, idx, slots=slots, lengths=lengths, causal=True)
        return task.head(states, lengths)
    if kind in ("tul", "tte"):
        pooled, _, _ = _pooled_sequences(pipeline, reps, [it[0] for it in items], [it[1] for it in items])
        out = task.head(pooled)
        return out.squeeze(-1) if kind == "tte" else out
    if kind == "sts":
        originals, _, _ = _pooled_sequences(pipeline, reps, [it[0] for it in items], [it[1] for it in items])
        detours, _, _ = _pooled_sequences(pipeline, reps, [it[2] for it in items], [it[3] for it in items])
        return originals, detours
    raise UsageError(f"unknown downstream task {kind!r}")


def task_loss(pipeline: EncoderPipeline, task: DownstreamTask, reps: torch.Tensor, items: Sequence) -> torch.Tensor:
    kind = task.kind
    out = task_outputs(pipeline, task, reps, items)
    if kind in ("poic", "lpc"):
        return F.cross_entropy(out, torch.tensor([c for _, c in items]))
    if kind == "npp":
        return F.cross_entropy(out, torch.tensor([t for _, _, t in items]))
    if kind == "tul":
        return F.cross_entropy(out, torch.tensor([u for _, _, u in items]))
    if kind in ("asi", "tte", "mi"):
        raw = torch.tensor([it[-1] for it in items], dtype=out.dtype)
        return F.mse_loss(out, (raw - task.target_mean) / task.target_scale)
    if kind == "fi":
        raw = torch.tensor([[i, o] for _, i, o in items], dtype=out.dtype)
        return F.mse_loss(out, (raw - task.target_mean) / task.target_scale)
    if kind == "sts":
        originals, detours = out
        if len(items) < 2:
            raise UsageError("similarity fine-tuning needs a batch of >= 2 trajectories")
        b = originals.shape[0]
        others = torch.stack([torch.cat([detours[:i], detours[i + 1 :]]) for i in range(b)])
        return info_nce(originals, detours, others)
    raise UsageError(f"unknown downstream task {kind!r}")


def evaluate_task(
    pipeline: EncoderPipeline,
    ctx: EncodeContext,
    task: DownstreamTask,
    items: Sequence,
    ks: Sequence[int] = (1, 5),
    seed: int = 0,
) -> MetricReport:
    """Metric report over ``items`` with frozen parameters."""
    if not items:
        raise UsageError(f"no evaluation items for task {task.kind}")
    with torch.no_grad():
        reps = entity_representations(pipeline, ctx, frozen=True)
        if task.metric_kind == "classification":
            logits = task_outputs(pipeline, task, reps, items).numpy()
            truths = [it[-1] for it in items]
            ks_eff = [k for k in ks if k <= logits.shape[1]] or [1]
            values = classification_metrics(logits, truths, ks=ks_eff)
        elif task.metric_kind == "regression":
            preds = task_outputs(pipeline, task, reps, items).numpy()
            preds = preds * task.target_scale + task.target_mean
            if task.kind == "fi":
                truths = np.array([[i, o] for _, i, o in items], dtype=np.float64)
                values = regression_metrics(preds.reshape(-1), truths.reshape(-1))
            else:
                truths_list = [it[-1] for it in items]
                values = regression_metrics(preds, truths_list)
        else:  # retrieval: detoured variants form the database, originals query it
            originals, detours = task_outputs(pipeline, task, reps, items)
            index = sts_index([(it[4], v) for it, v in zip(items, detours.numpy())])
            rankings = [sts_query(index, q) for q in originals.numpy()]
            truths = [it[4] for it in items]
            ks_eff = [k for k in ks if k <= len(items)] or [1]
            values = sts_metrics(rankings, truths, ks=ks_eff)
    return MetricReport(task=task.kind, values=values, n_samples=len(items), seed=seed)


def export_predictions(
    pipeline: EncoderPipeline,
    ctx: EncodeContext,
    task: DownstreamTask,
    items: Sequence,
    keys: Sequence,
    path,
) -> None:
    """Write per-item predictions as `item_id,prediction[,rank]` CSV.

    Classification and retrieval rows carry the 1-based rank of the truth;
    regression rows carry only the predicted value.
    """
    if len(items) != len(keys):
        raise UsageError("items and keys must align")
    lines = []
    with torch.no_grad():
        reps = entity_representations(pipeline, ctx, frozen=True)
        if task.metric_kind == "classification":
            lines.append("item_id,prediction,rank")
            logits = task_outputs(pipeline, task, reps, items).numpy()
            for key, row, item in zip(keys, logits, items):
                order = sorted(range(len(row)), key=lambda c: (-row[c], task.classes[c]))
                predicted = task.classes[order[0]]
                truth_rank = order.index(item[-1]) + 1
                lines.append(f"{key},{predicted},{truth_rank}")
        elif task.metric_kind == "regression":
            lines.append("item_id,prediction")
            preds = task_outputs(pipeline, task, reps, items).numpy()
            preds = preds * task.target_scale + task.target_mean
            for key, pred in zip(keys, preds.reshape(len(items), -1)):
                value = ";".join(repr(float(v)) for v in pred)
                lines.append(f"{key},{value}")
        else:
            lines.append("item_id,prediction,rank")
            originals, detours = task_outputs(pipeline, task, reps, items)
            index = sts_index([(it[4], v) for it, v in zip(items, detours.numpy())])
            for key, q, item in zip(keys, originals.numpy(), items):
                ranked = sts_query(index, q)
                lines.append(f"{key},{ranked[0]},{ranked.index(item[4]) + 1}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def primary_metric(task: DownstreamTask) -> tuple[str, int]:
    """Selection metric name and direction (+1 maximize, -1 minimize)."""
    if task.metric_kind == "regression":
        return "mae", -1
    return "acc@1", +1


def _snapshot(modules):
    return [[p.detach().clone() for p in m.parameters()] for m in modules]


def _restore(modules, snap):
    with torch.no_grad():
        for m, params in zip(modules, snap):
            for p, saved in zip(m.parameters(), params):
                p.copy_(saved)


def finetune(
    pipeline: EncoderPipeline,
    ctx: EncodeContext,
    task: DownstreamTask,
    strategy: str,
    train_items: Sequence,
    val_items: Sequence,
    budget: int = 500,
    batch_size: int = 64,
    learning_rate: float = 1e-3,
    optimizer: str = "adam",
    seed: int = 0,
    eval_every: Optional[int] = None,
    ks: Sequence[int] = (1, 5),
) -> list[tuple[int, float]]:
    """Fine-tune in place; returns the (step, validation metric) history.

    The parameter snapshot with the best validation metric is restored at the
    end. ``downstream-only`` never touches encoder parameters.
    """
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown fine-tuning strategy {strategy!r}")
    if task.entity_kind != ctx.entity_kind:
        raise UsageError(
            f"task {task.kind} runs on {task.entity_kind} entities, context holds {ctx.entity_kind}"
        )
    if not train_items:
        raise UsageError("no training items")
    if task.metric_kind == "regression":
        task.fit_target_scale(train_items)

    end_to_end = strategy == "end-to-end"
    modules = []
    if task.head is not None:
        modules.append(task.head)
    if end_to_end:
        modules.append(pipeline)
    params = [p for m in modules for p in m.parameters() if p.requires_grad]

    frozen_reps = None if end_to_end else entity_representations(pipeline, ctx, frozen=True)
    metric_name, direction = primary_metric(task)
    eval_every = eval_every or max(1, budget // 10)
    rng = random.Random(f"{seed}:finetune:{task.kind}")

    def validate(step):
        report = evaluate_task(pipeline, ctx, task, val_items, ks=ks, seed=seed)
        return report.values[metric_name]

    history: list[tuple[int, float]] = []
    best_value = None
    best_snap = None
    if params:
        opt = (
            torch.optim.Adam(params, lr=learning_rate)
            if optimizer == "adam"
            else torch.optim.SGD(params, lr=learning_rate)
        )
        min_batch = 2 if task.kind == "sts" else 1
        for step in range(budget):
            k = max(min_batch, min(batch_size, len(train_items)))
            batch = [train_items[rng.randrange(len(train_items))] for _ in range(k)]
            reps = frozen_reps if frozen_reps is not None else entity_representations(pipeline, ctx, frozen=False)
            loss = task_loss(pipeline, task, reps, batch)
            opt.zero_grad()
            loss.backward()
            opt.step()
            if val_items and (step % eval_every == eval_every - 1 or step == budget - 1):
                value = validate(step)
                history.append((step, value))
                if best_value is None or direction * (value - best_value) > 0:
                    best_value = value
                    best_snap = _snapshot(modules)
        if best_snap is not None:
            _restore(modules, best_snap)
    elif val_items:
        history.append((0, validate(0)))
    return history
