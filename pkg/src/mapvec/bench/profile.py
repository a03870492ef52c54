"""Efficiency profiling: parameter count, epoch time, inference time."""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from ..encoders.pipeline import EncoderPipeline
from ..pretrain.train import PretrainData, TrainingRun, pretrain


@dataclass
class EfficiencyRecord:
    param_count_m: float  # learnable scalars / 1e6
    epoch_time_s: float
    inference_time_s: float

    def rows(self):
        return [
            ("param_count_m", self.param_count_m),
            ("epoch_time_s", self.epoch_time_s),
            ("inference_time_s", self.inference_time_s),
        ]


def parameter_count(pipeline: EncoderPipeline) -> int:
    return sum(p.numel() for p in pipeline.parameters())


def profile(
    pipeline: EncoderPipeline,
    tasks: Sequence[str],
    run: TrainingRun,
    data: PretrainData,
    evaluate: Optional[Callable[[], object]] = None,
    epochs: int = 2,
) -> EfficiencyRecord:
    """Measure the pipeline's size and wall-clock costs.

    Epoch time is the mean over ``epochs`` measured epochs after one warm-up
    epoch, where an epoch is one pass of the pretraining pool at the run's
    batch size. Training for timing happens on a throwaway copy. Inference
    time is one call of ``evaluate`` (a full test-partition evaluation).
    """
    params = parameter_count(pipeline)

    pool = max(len(data.trajectories), len(data.entity_ids))
    steps_per_epoch = max(1, math.ceil(pool / run.batch_size))
    scratch = copy.deepcopy(pipeline)
    timings = [0.0] if not tasks else []
    for epoch in range(epochs + 1 if tasks else 0):
        epoch_run = TrainingRun(
            paradigm=run.paradigm,
            steps=steps_per_epoch,
            batch_size=run.batch_size,
            learning_rate=run.learning_rate,
            optimizer=run.optimizer,
            task_weights=run.task_weights,
            tau=run.tau,
            k_neg=run.k_neg,
            mask_ratio=run.mask_ratio,
            mask_mode=run.mask_mode,
            seed=run.seed + epoch,
        )
        t0 = time.perf_counter()
        pretrain(scratch, tasks, epoch_run, data)
        elapsed = time.perf_counter() - t0
        if epoch > 0:  # discard the warm-up epoch
            timings.append(elapsed)

    inference_time = 0.0
    if evaluate is not None:
        t0 = time.perf_counter()
        evaluate()
        inference_time = time.perf_counter() - t0

    return EfficiencyRecord(
        param_count_m=params / 1e6,
        epoch_time_s=sum(timings) / len(timings),
        inference_time_s=inference_time,
    )
