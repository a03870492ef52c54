"""Downstream tasks: heads, labels, strategies, and the frozen-encoder invariant."""

import hashlib
from collections import Counter

import numpy as np
import pytest
import torch

from mapvec.data import SyntheticCitySpec, generate_synthetic_city, parcel_of_point, split_dataset
from mapvec.downstream import (
    EncodeContext,
    build_task,
    evaluate_task,
    finetune,
    flow_labels,
    od_pair_labels,
    task_loss,
    task_outputs,
)
from mapvec.encoders import (
    TokenEncoder,
    compose_pipeline,
    fit_feature_codec,
    save_checkpoint,
)
from mapvec.errors import LeakageError, UsageError
from mapvec.pretrain import PretrainData

torch.set_num_threads(1)


@pytest.fixture(scope="module")
def city():
    return generate_synthetic_city(
        SyntheticCitySpec(grid_rows=4, grid_cols=4, n_pois=60, n_users=12, n_trajectories=200,
                          n_categories=4, seed=17)
    )


def make_setup(city, kind, exclude=(), dim=32, seed=2):
    codec = fit_feature_codec(city.entities_of_kind(kind), exclude=list(exclude))
    data = PretrainData.build(city, kind, codec)
    pipe = compose_pipeline([("token", TokenEncoder(codec.widths, dim=dim, seed=seed))])
    ctx = EncodeContext(kind, data.feature_idx, data.adjacency)
    return codec, pipe, ctx


class TestTaskConstruction:
    def test_asi_leakage_guard_fires(self, city):
        segments = city.entities_of_kind("polyline")
        tainted = [type(s)(s.id, s.kind, s.geometry, {**s.features, "speed": 1.0}) for s in segments]
        codec = fit_feature_codec(tainted)
        with pytest.raises(LeakageError, match="speed"):
            build_task("asi", city, codec, dim=16)

    def test_asi_without_speed_feature_builds(self, city):
        codec, _, _ = make_setup(city, "polyline")
        task = build_task("asi", city, codec, dim=16)
        assert task.items and task.metric_kind == "regression"

    def test_unknown_kind_rejected(self, city):
        codec, _, _ = make_setup(city, "point")
        with pytest.raises(UsageError):
            build_task("bogus", city, codec, dim=16)

    def test_fi_labels_match_endpoint_histogram(self, city):
        flows = flow_labels(city)
        parcels = city.entities_of_kind("polygon")
        pois = {e.id: e.geometry[0] for e in city.entities_of_kind("point")}
        inflow = Counter()
        outflow = Counter()
        for tr in city.trajectories_over("point"):
            outflow[parcel_of_point(pois[tr.samples[0][0]], parcels)] += 1
            inflow[parcel_of_point(pois[tr.samples[-1][0]], parcels)] += 1
        for pid, (fin, fout) in flows.items():
            assert fin == inflow.get(pid, 0)
            assert fout == outflow.get(pid, 0)

    def test_mi_labels_equal_od_network(self, city):
        od = od_pair_labels(city)
        assert od == city.networks["parcel_od"].edges
        codec, _, _ = make_setup(city, "polygon")
        task = build_task("mi", city, codec, dim=16)
        assert len(task.items) == len(od)


class TestHeadsAndLosses:
    def test_poic_single_class_probability_one(self, city):
        codec, pipe, ctx = make_setup(city, "point", exclude=["category"])
        task = build_task("poic", city, codec, dim=32)
        # Collapse to one class by relabeling.
        task.classes = ["only"]
        task.items = [(row, 0) for row, _ in task.items]
        from mapvec.downstream.tasks import MlpClassifier

        task.head = MlpClassifier(32, 1, seed=0)
        reps = pipe.encode_entities(ctx.feature_idx)
        logits = task_outputs(pipe, task, reps, task.items[:5])
        probs = torch.softmax(logits, dim=1)
        assert torch.allclose(probs, torch.ones_like(probs))

    def test_zeroed_classifier_is_uniform(self, city):
        codec, pipe, ctx = make_setup(city, "point", exclude=["category"])
        task = build_task("poic", city, codec, dim=32)
        with torch.no_grad():
            for p in task.head.parameters():
                p.zero_()
        reps = pipe.encode_entities(ctx.feature_idx)
        logits = task_outputs(pipe, task, reps, task.items[:4])
        c = len(task.classes)
        assert torch.allclose(torch.softmax(logits, dim=1), torch.full((4, c), 1.0 / c))

    def test_untrained_ce_is_ln_num_classes(self, city):
        codec, pipe, ctx = make_setup(city, "point")
        task = build_task("tul", city, codec, dim=32)
        with torch.no_grad():
            for p in task.head.parameters():
                p.zero_()
        reps = pipe.encode_entities(ctx.feature_idx)
        loss = task_loss(pipe, task, reps, task.items[:8])
        assert float(loss) == pytest.approx(np.log(len(task.classes)), abs=1e-6)

    def test_npp_untrained_ce_is_ln_v(self, city):
        codec, pipe, ctx = make_setup(city, "point")
        task = build_task("npp", city, codec, dim=32)
        with torch.no_grad():
            task.head.out.zero_()
        reps = pipe.encode_entities(ctx.feature_idx)
        loss = task_loss(pipe, task, reps, task.items[:8])
        assert float(loss) == pytest.approx(np.log(len(task.classes)), abs=1e-6)

    def test_constant_tte_recovered_by_target_scale(self, city):
        codec, pipe, ctx = make_setup(city, "polyline")
        task = build_task("tte", city, codec, dim=32)
        items = [(it[0], it[1], 300.0) for it in task.items]  # all trips take 300 s
        task.fit_target_scale(items)
        with torch.no_grad():
            task.head.w.zero_()
            task.head.b.zero_()
        report = evaluate_task(pipe, ctx, task, items[:10])
        assert report.values["mae"] == pytest.approx(0.0, abs=1e-6)


class TestFinetuneStrategies:
    def checkpoint_hash(self, pipe, tmp_path, tag):
        path = tmp_path / f"{tag}.ckpt"
        save_checkpoint(pipe, path)
        return hashlib.blake2b(path.read_bytes()).hexdigest()

    def test_downstream_only_keeps_encoder_bytes(self, city, tmp_path):
        codec, pipe, ctx = make_setup(city, "point", exclude=["category"])
        task = build_task("poic", city, codec, dim=32)
        train, val, test = split_dataset(task.items, seed=0)
        before = self.checkpoint_hash(pipe, tmp_path, "before")
        finetune(pipe, ctx, task, "downstream-only", train, val, budget=30, batch_size=16, seed=0)
        after = self.checkpoint_hash(pipe, tmp_path, "after")
        assert before == after

    def test_end_to_end_changes_encoder(self, city, tmp_path):
        codec, pipe, ctx = make_setup(city, "point", exclude=["category"])
        task = build_task("poic", city, codec, dim=32)
        train, val, test = split_dataset(task.items, seed=0)
        before = self.checkpoint_hash(pipe, tmp_path, "before")
        finetune(pipe, ctx, task, "end-to-end", train, val, budget=30, batch_size=16, seed=0)
        after = self.checkpoint_hash(pipe, tmp_path, "after")
        assert before != after

    def test_end_to_end_beats_or_ties_downstream_only(self, city):
        results = {}
        for strategy in ("downstream-only", "end-to-end"):
            codec, pipe, ctx = make_setup(city, "point", exclude=["category"], seed=3)
            task = build_task("poic", city, codec, dim=32, seed=3)
            train, val, test = split_dataset(task.items, seed=3)
            finetune(pipe, ctx, task, strategy, train, val, budget=150, batch_size=32, seed=3)
            results[strategy] = evaluate_task(pipe, ctx, task, test).values["acc@1"]
        assert results["end-to-end"] >= results["downstream-only"]

    def test_entity_kind_mismatch_rejected(self, city):
        codec, pipe, ctx = make_setup(city, "point")
        task = build_task("asi", city, fit_feature_codec(city.entities_of_kind("polyline")), dim=32)
        with pytest.raises(UsageError, match="runs on"):
            finetune(pipe, ctx, task, "end-to-end", task.items, [], budget=1)

    def test_sts_evaluation_ranks_own_detour(self, city):
        codec, pipe, ctx = make_setup(city, "polyline")
        task = build_task("sts", city, codec, dim=32, seed=4)
        assert task.head is None and task.items
        report = evaluate_task(pipe, ctx, task, task.items[:20], ks=(1, 5))
        assert set(report.values) == {"acc@1", "acc@5", "mean_rank"}
        assert report.values["mean_rank"] >= 1.0

    def test_lpc_planted_signal(self, city):
        # The unique-per-parcel block feature invites memorization on 16
        # items; the planted function class generalizes through the lon bins.
        codec, pipe, ctx = make_setup(city, "polygon", exclude=["category", "block"], seed=5)
        task = build_task("lpc", city, codec, dim=32, seed=5)
        train, val, test = split_dataset(task.items, seed=5)
        finetune(pipe, ctx, task, "end-to-end", train, val, budget=200, batch_size=8, seed=5)
        acc = evaluate_task(pipe, ctx, task, test).values["acc@1"]
        assert acc >= 0.9


class TestExports:
    def test_predictions_csv_classification(self, city, tmp_path):
        from mapvec.downstream import export_predictions

        codec, pipe, ctx = make_setup(city, "point", exclude=["category"])
        task = build_task("poic", city, codec, dim=32)
        path = tmp_path / "preds.csv"
        export_predictions(pipe, ctx, task, task.items[:5], task.item_keys[:5], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "item_id,prediction,rank"
        assert len(lines) == 6
        first = lines[1].split(",")
        assert first[0] == task.item_keys[0]
        assert first[1] in task.classes
        assert 1 <= int(first[2]) <= len(task.classes)

    def test_predictions_csv_regression(self, city, tmp_path):
        from mapvec.downstream import export_predictions

        codec, pipe, ctx = make_setup(city, "polyline")
        task = build_task("asi", city, codec, dim=32)
        path = tmp_path / "preds.csv"
        export_predictions(pipe, ctx, task, task.items[:4], task.item_keys[:4], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "item_id,prediction"
        assert len(lines) == 5
        float(lines[1].split(",")[1])  # parses as a number

    def test_history_csv(self, city, tmp_path):
        from mapvec.pretrain import PretrainData, TrainingRun, pretrain, save_history

        codec, pipe, ctx = make_setup(city, "point")
        data = PretrainData.build(city, "point", codec)
        _, hist = pretrain(pipe, ["tokri"], TrainingRun(steps=4, batch_size=16, seed=0), data)
        path = tmp_path / "history.csv"
        save_history(hist, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "step,task,loss"
        assert len(lines) == 5
        step, task, loss = lines[1].split(",")
        assert (step, task) == ("0", "tokri")
        assert float(loss) > 0
