"""Metric implementations against direct arithmetic and brute-force oracles."""

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapvec.errors import UsageError
from mapvec.metrics import (
    MetricReport,
    aggregate_seeds,
    classification_metrics,
    regression_metrics,
    sts_metrics,
)


class TestRegression:
    def test_perfect_predictions(self):
        m = regression_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert m["mae"] == m["mse"] == m["rmse"] == m["mape"] == 0.0
        assert m["r2"] == 1.0

    def test_hand_computed_values(self):
        m = regression_metrics([0.0, 4.0], [2.0, 2.0])
        assert m["mae"] == 2.0
        assert m["mse"] == 4.0
        assert m["rmse"] == 2.0
        assert m["mape"] == 100.0

    def test_constant_truths_flag_undefined_r2(self):
        m = regression_metrics([0.0, 4.0], [2.0, 2.0])
        assert "r2" not in m
        assert m["r2_undefined"] == 1.0

    def test_zero_truths_excluded_from_mape(self):
        m = regression_metrics([1.0, 3.0, 5.0], [0.0, 2.0, 4.0])
        assert m["mape_excluded"] == 1.0
        assert m["mape"] == pytest.approx((0.5 + 0.25) / 2 * 100)

    def test_length_mismatch(self):
        with pytest.raises(UsageError):
            regression_metrics([1.0], [1.0, 2.0])

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 60))
    def test_matches_brute_force(self, seed, n):
        rng = random.Random(seed)
        preds = [rng.uniform(-5, 5) for _ in range(n)]
        truths = [rng.uniform(1, 5) for _ in range(n)]
        m = regression_metrics(preds, truths)
        mae = sum(abs(p - t) for p, t in zip(preds, truths)) / n
        mse = sum((p - t) ** 2 for p, t in zip(preds, truths)) / n
        mean_t = sum(truths) / n
        ss_tot = sum((t - mean_t) ** 2 for t in truths)
        mape = sum(abs((p - t) / t) for p, t in zip(preds, truths)) / n * 100
        assert m["mae"] == pytest.approx(mae, abs=1e-12)
        assert m["mse"] == pytest.approx(mse, abs=1e-12)
        assert m["rmse"] == pytest.approx(math.sqrt(mse), abs=1e-12)
        assert m["mape"] == pytest.approx(mape, abs=1e-9)
        if ss_tot > 0:
            assert m["r2"] == pytest.approx(1 - n * mse / ss_tot, abs=1e-9)
        assert m["rmse"] ** 2 == pytest.approx(m["mse"], rel=1e-12)


class TestClassification:
    def test_truth_always_first(self):
        scores = np.array([[0.9, 0.1], [0.8, 0.2]])
        m = classification_metrics(scores, [0, 0], ks=(1,))
        assert m["acc@1"] == 1.0
        assert m["mean_rank"] == 1.0
        assert m["f1_macro"] == 1.0

    def test_truth_ranks_1_3_5(self):
        # Item i's truth sits at rank 1 / 3 / 5 via descending scores.
        scores = np.zeros((3, 5))
        scores[0] = [5, 4, 3, 2, 1]  # truth 0 -> rank 1
        scores[1] = [5, 4, 3, 2, 1]  # truth 2 -> rank 3
        scores[2] = [5, 4, 3, 2, 1]  # truth 4 -> rank 5
        m = classification_metrics(scores, [0, 2, 4], ks=(3,))
        assert m["mean_rank"] == 3.0
        assert m["acc@3"] == pytest.approx(2 / 3)

    def test_two_class_perfect_top1(self):
        scores = np.array([[2.0, 1.0], [1.0, 2.0], [2.0, 1.0]])
        m = classification_metrics(scores, [0, 1, 0], ks=(1,))
        assert m["f1_macro"] == 1.0

    def test_ties_broken_by_smaller_candidate_id(self):
        scores = np.array([[1.0, 1.0, 1.0]])
        m = classification_metrics(scores, [2], ks=(1,))
        assert m["mean_rank"] == 3.0

    def test_k_too_large_rejected(self):
        with pytest.raises(UsageError):
            classification_metrics(np.ones((1, 3)), [0], ks=(4,))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_acc_nondecreasing_in_k_and_mr_at_least_one(self, seed):
        rng = np.random.default_rng(seed)
        n, c = rng.integers(1, 40), rng.integers(2, 10)
        scores = rng.normal(size=(int(n), int(c)))
        truths = rng.integers(0, int(c), size=int(n)).tolist()
        ks = list(range(1, int(c) + 1))
        m = classification_metrics(scores, truths, ks=ks)
        accs = [m[f"acc@{k}"] for k in ks]
        assert all(b >= a for a, b in zip(accs, accs[1:]))
        assert m["mean_rank"] >= 1.0
        assert accs[-1] == 1.0


class TestSts:
    def test_restricted_metric_set(self):
        m = sts_metrics([["a", "b", "c"]], ["b"], ks=(1, 2))
        assert set(m) == {"acc@1", "acc@2", "mean_rank"}
        assert m["acc@1"] == 0.0 and m["acc@2"] == 1.0 and m["mean_rank"] == 2.0

    def test_missing_truth_rejected(self):
        with pytest.raises(UsageError):
            sts_metrics([["a"]], ["z"], ks=(1,))


class TestAggregateSeeds:
    def test_single_report_zero_std(self):
        r = MetricReport("poic", {"acc@1": 0.8}, n_samples=10, seed=1)
        assert aggregate_seeds([r]) == {"acc@1": (0.8, 0.0)}

    def test_mean_and_population_std(self):
        rs = [
            MetricReport("poic", {"acc@1": 1.0}, n_samples=10, seed=1),
            MetricReport("poic", {"acc@1": 3.0}, n_samples=10, seed=2),
        ]
        assert aggregate_seeds(rs) == {"acc@1": (2.0, 1.0)}

    def test_order_invariant(self):
        rs = [
            MetricReport("t", {"m": float(v)}, n_samples=3, seed=i) for i, v in enumerate([4, 7, 1])
        ]
        assert aggregate_seeds(rs) == aggregate_seeds(list(reversed(rs)))

    def test_heterogeneous_keys_rejected(self):
        rs = [
            MetricReport("t", {"a": 1.0}, n_samples=1, seed=0),
            MetricReport("t", {"b": 1.0}, n_samples=1, seed=1),
        ]
        with pytest.raises(UsageError):
            aggregate_seeds(rs)

    def test_nonfinite_values_rejected(self):
        with pytest.raises(UsageError):
            MetricReport("t", {"a": float("nan")}, n_samples=1, seed=0)
