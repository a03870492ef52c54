"""End-to-end experiment runner: pretrain -> fine-tune -> evaluate per seed."""

from __future__ import annotations

import hashlib

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import torch

from ..bench.profile import EfficiencyRecord, profile
from ..data.model import Dataset
from ..data.store import load_dataset
from ..data.synth import generate_synthetic_city
from ..data.model import validate_dataset
from ..downstream.finetune import EncodeContext, evaluate_task, finetune
from ..downstream.tasks import TASK_LABEL_FEATURE, build_task
from ..encoders.checkpoint import save_checkpoint
from ..encoders.codec import fit_feature_codec
from ..encoders.graph import GraphEncoder
from ..encoders.pipeline import EncoderPipeline, compose_pipeline
from ..encoders.sequence import SequenceEncoder
from ..encoders.token import TokenEncoder
from ..errors import IntegrityError, ResourceError, UsageError
from ..metrics import MetricReport, aggregate_seeds, report_rows
from ..pretrain.train import PretrainData, StepRecord, TrainingRun, derive_seed, history_rows, pretrain
from .config import PipelineConfig

ENTITY_ITEM_TASKS = ("poic", "lpc", "asi", "fi")
TRAJ_ITEM_TASKS = ("npp", "tul", "tte", "sts")

@dataclass
class ExperimentResult:
    fingerprint: str
    config: PipelineConfig
    reports: dict[int, MetricReport]
    aggregated: dict[str, tuple[float, float]]
    efficiency: EfficiencyRecord
    histories: dict[int, list[StepRecord]]

    def seed_rows(self):
        rows = []
        for seed in sorted(self.reports):
            rep = self.reports[seed]
            for metric in sorted(rep.values):
                rows.append((rep.task, metric, seed, rep.values[metric]))
        return rows

    def aggregate_rows(self):
        task = self.config.downstream
        return report_rows(task, self.aggregated, n_seeds=len(self.reports))

    def content_hash(self) -> str:
        lines = [csv_line(row) for row in self.seed_rows()]
        lines += [csv_line(row) for row in self.aggregate_rows()]
        return hashlib.blake2b("\n".join(lines).encode("utf-8"), digest_size=16).hexdigest()


def csv_line(row) -> str:
    """Strings verbatim, floats via repr (shortest round-trip form)."""
    return ",".join(v if isinstance(v, str) else repr(v) for v in row)

def resolve_batch(requested: int, memory_probe: Callable[[int], bool]) -> int:
    """Halve the batch size until the probe accepts it; 8 is the floor."""
    if requested < 8:
        raise UsageError(f"requested batch size {requested} is below the minimum of 8")
    batch = requested
    while not memory_probe(batch):
        if batch == 8:
            raise ResourceError("memory probe still failing at the minimum batch size of 8")
        batch = max(8, batch // 2)
    return batch

def _load_or_synthesize(config: PipelineConfig) -> Dataset:
    if config.dataset is not None:
        return load_dataset(config.dataset)
    return generate_synthetic_city(config.synthetic_spec)

def _truncate_trajectories(dataset: Dataset, max_len: int) -> Dataset:
    trajs = [
        replace(tr, samples=tr.samples[:max_len]) if len(tr) > max_len else tr
        for tr in dataset.trajectories
    ]
    return replace(dataset, trajectories=trajs)

def build_encoder_pipeline(config: PipelineConfig, codec, seed: int) -> EncoderPipeline:
    hp = config.hparams
    stages = [("token", TokenEncoder(codec.widths, dim=hp.dim, seed=derive_seed(seed, "token")))]
    if "graph" in config.stages:
        stages.append(
            ("graph", GraphEncoder(dim=hp.dim, layers=hp.graph_layers, seed=derive_seed(seed, "graph")))
        )
    if "sequence" in config.stages:
        stages.append(
            (
                "sequence",
                SequenceEncoder(
                    dim=hp.dim,
                    arch=hp.seq_arch,
                    layers=hp.seq_layers,
                    heads=hp.heads,
                    hidden=hp.hidden,
                    max_len=hp.max_len,
                    time_slots=hp.time_slots,
                    seed=derive_seed(seed, "sequence"),
                ),
            )
        )
    return compose_pipeline(stages, paradigm=config.paradigm)

def _split_indices(n: int, seed: int):
    from ..data.preprocess import split_dataset

    return split_dataset(list(range(n)), seed=seed)

def run_pipeline(
    config: PipelineConfig,
    memory_probe: Optional[Callable[[int], bool]] = None,
    trace: Optional[dict] = None,
) -> ExperimentResult:
    """Run the full protocol for every seed and aggregate the reports.

    ``memory_probe`` feeds the batch-size resolver; ``trace`` (a dict) is
    filled with per-seed partition keys and phase inputs so tests can audit
    that model selection never saw the test partition.
    """
    config.validate()
    torch.set_num_threads(1)
    hp = config.hparams
    batch = resolve_batch(hp.batch, memory_probe) if memory_probe is not None else hp.batch

    dataset = _load_or_synthesize(config)
    violations = validate_dataset(dataset)
    if violations:
        details = "; ".join(f"{v.kind}: {v.message}" for v in violations[:5])
        raise IntegrityError(f"dataset failed validation ({len(violations)} violations): {details}")
    dataset = _truncate_trajectories(dataset, hp.max_len)

    exclude = list(hp.exclude_features)
    label_feature = TASK_LABEL_FEATURE.get(config.downstream)
    if label_feature is not None and label_feature not in exclude:
        exclude.append(label_feature)
    entities = dataset.entities_of_kind(config.entity)
    codec = fit_feature_codec(entities, bins=hp.bins, exclude=exclude)

    reports: dict[int, MetricReport] = {}
    histories: dict[int, list[StepRecord]] = {}
    efficiency: Optional[EfficiencyRecord] = None

    for seed in config.seeds:
        task = build_task(
            config.downstream,
            dataset,
            codec,
            dim=hp.dim,
            hidden=hp.hidden,
            seed=derive_seed(seed, "head"),
            time_slots=hp.time_slots,
            dtype=torch.float32,
        )
        train_idx, val_idx, test_idx = _split_indices(len(task.items), seed=seed)
        train_items = [task.items[i] for i in train_idx]
        val_items = [task.items[i] for i in val_idx]
        test_items = [task.items[i] for i in test_idx]

        allowed_rows = None
        allowed_traj_ids = None
        held_out = {task.item_keys[i] for i in val_idx} | {task.item_keys[i] for i in test_idx}
        if config.downstream in ENTITY_ITEM_TASKS:
            id_rows = {e.id: r for r, e in enumerate(entities)}
            allowed_rows = {r for eid, r in id_rows.items() if eid not in held_out}
        elif config.downstream in TRAJ_ITEM_TASKS:
            allowed_traj_ids = {
                tr.id for tr in dataset.trajectories_over(config.entity) if tr.id not in held_out
            }

        data = PretrainData.build(
            dataset,
            config.entity,
            codec,
            network_name=hp.network,
            time_slots=hp.time_slots,
            allowed_rows=allowed_rows,
            allowed_traj_ids=allowed_traj_ids,
        )
        pipeline = build_encoder_pipeline(config, codec, seed)
        run = TrainingRun(
            paradigm=config.paradigm,
            steps=hp.pretrain_steps,
            batch_size=batch,
            learning_rate=hp.lr,
            optimizer=hp.optimizer,
            task_weights=dict(config.task_weights),
            tau=hp.tau,
            k_neg=hp.k_neg,
            mask_ratio=hp.mask_ratio,
            mask_mode=hp.mask_mode,
            seed=seed,
        )
        if config.pretrain_tasks:
            pipeline, history = pretrain(pipeline, config.pretrain_tasks, run, data)
        else:
            history = []

        ctx = EncodeContext(config.entity, data.feature_idx, data.adjacency)
        finetune(
            pipeline,
            ctx,
            task,
            config.finetune,
            train_items,
            val_items,
            budget=hp.finetune_steps,
            batch_size=batch,
            learning_rate=hp.lr,
            optimizer=hp.optimizer,
            seed=seed,
        )
        report = evaluate_task(pipeline, ctx, task, test_items, seed=seed)
        reports[seed] = report
        histories[seed] = history

        if trace is not None:
            trace[seed] = {
                "train_keys": sorted({task.item_keys[i] for i in train_idx}),
                "val_keys": sorted({task.item_keys[i] for i in val_idx}),
                "test_keys": sorted({task.item_keys[i] for i in test_idx}),
                "finetune_saw": sorted(
                    {task.item_keys[i] for i in train_idx} | {task.item_keys[i] for i in val_idx}
                ),
                "evaluate_saw": sorted({task.item_keys[i] for i in test_idx}),
            }

        if efficiency is None:
            efficiency = profile(
                pipeline,
                config.pretrain_tasks,
                run,
                data,
                evaluate=lambda: evaluate_task(pipeline, ctx, task, test_items, seed=seed),
                epochs=1,
            )

        if config.out:
            out = Path(config.out)
            out.mkdir(parents=True, exist_ok=True)
            save_checkpoint(
                pipeline,
                out / f"encoder_seed{seed}.ckpt",
                meta={"stages": pipeline.stage_names, "seed": seed},
            )

    aggregated = aggregate_seeds([reports[s] for s in sorted(reports)])
    result = ExperimentResult(
        fingerprint=config.fingerprint(),
        config=config,
        reports=reports,
        aggregated=aggregated,
        efficiency=efficiency,
        histories=histories,
    )
    if config.out:
        write_outputs(result, Path(config.out))
    return result

def write_outputs(result: ExperimentResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lines = ["task,metric,mean,std,n_seeds"]
    lines += [csv_line(row) for row in result.aggregate_rows()]
    (out / "result.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["task,metric,seed,value"]
    lines += [csv_line(row) for row in result.seed_rows()]
    (out / "result_seeds.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["metric,value"]
    lines += [f"{name},{value!r}" for name, value in result.efficiency.rows()]
    (out / "efficiency.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["seed,step,task,loss"]
    for seed in sorted(result.histories):
        for step, task, loss in history_rows(result.histories[seed]):
            lines.append(f"{seed},{step},{task},{loss!r}")
    (out / "loss_history.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    (out / "result_hash.txt").write_text(result.content_hash() + "\n", encoding="utf-8")
