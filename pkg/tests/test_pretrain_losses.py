"""Closed-form values, skip signals, and determinism of the ten pretraining losses."""

import math
import random

import pytest
import torch

from mapvec.data import MapEntity, RelationNetwork
from mapvec.encoders import GraphEncoder, SequenceEncoder, TokenEncoder, fit_feature_codec
from mapvec.pretrain import (
    AugmentationPolicy,
    PretrainHead,
    atocl_loss,
    atrcl_loss,
    augment_positions,
    drop_edges,
    edge_drop_weights,
    gau_loss,
    info_nce,
    mask_positions,
    mtr_loss,
    ncl_loss,
    nfi_loss,
    tokri_loss,
    trajp_loss,
    trcl_loss,
)
from mapvec.errors import UsageError

F64 = torch.float64
LN2 = math.log(2.0)


def seq_encoder_passthrough(dim=4):
    """Attention encoder whose blocks contribute nothing: output equals input."""
    enc = SequenceEncoder(dim=dim, heads=2, hidden=8, max_len=16, seed=0, dtype=F64)
    with torch.no_grad():
        enc.position_table.zero_()
        enc.slot_table.zero_()
        for blk in enc.blocks:
            blk.wo.zero_()
            blk.ff2.zero_()
            blk.ff2_b.zero_()
    return enc


class TestInfoNce:
    def test_all_equal_candidates_is_uniform_softmax(self):
        a = torch.tensor([1.0, 2.0], dtype=F64)
        loss = info_nce(a, a.clone(), a.repeat(15, 1))
        assert float(loss) == pytest.approx(math.log(16.0), abs=1e-9)

    def test_one_negative_equal_similarity(self):
        a = torch.tensor([1.0, 0.0], dtype=F64)
        p = torch.tensor([2.0, 0.0], dtype=F64)  # cosine 1, same as negative
        n = torch.tensor([[5.0, 0.0]], dtype=F64)
        assert float(info_nce(a, p, n)) == pytest.approx(LN2, abs=1e-9)

    def test_tau_to_zero_limit(self):
        a = torch.tensor([1.0, 0.0], dtype=F64)
        p = torch.tensor([1.0, 0.0], dtype=F64)
        n = torch.tensor([[-1.0, 0.0]], dtype=F64)
        assert float(info_nce(a, p, n, tau=1e-3)) < 1e-12

    def test_zero_norm_rejected(self):
        a = torch.zeros(2, dtype=F64)
        with pytest.raises(UsageError, match="zero-norm"):
            info_nce(a, a, a.repeat(2, 1))


class TestTokri:
    def head(self):
        return PretrainHead("tokri", dim=4, hidden=8, seed=0, dtype=F64)

    def test_logit_zero_gives_ln2(self):
        head = self.head()
        with torch.no_grad():
            head.pair_scorer.w2.zero_()
            head.pair_scorer.b2.zero_()
        r = torch.randn(6, 4, dtype=F64)
        labels = torch.tensor([0.0, 1.0, 0.0, 1.0, 1.0, 0.0], dtype=F64)
        assert float(tokri_loss(head, r, r, labels)) == pytest.approx(LN2, abs=1e-9)

    def test_confident_correct_prediction_vanishes(self):
        head = self.head()
        with torch.no_grad():
            head.pair_scorer.b2.fill_(50.0)  # push every logit to +50
        r = torch.randn(3, 4, dtype=F64)
        labels = torch.ones(3, dtype=F64)
        assert float(tokri_loss(head, r, r, labels)) < 1e-9

    def test_batch_mean_matches_per_pair_sum(self):
        head = self.head()
        r_i = torch.randn(5, 4, dtype=F64)
        r_j = torch.randn(5, 4, dtype=F64)
        labels = torch.tensor([1.0, 0.0, 1.0, 1.0, 0.0], dtype=F64)
        batched = float(tokri_loss(head, r_i, r_j, labels))
        singles = [
            float(tokri_loss(head, r_i[k : k + 1], r_j[k : k + 1], labels[k : k + 1])) for k in range(5)
        ]
        assert batched == pytest.approx(sum(singles) / 5, abs=1e-12)


class TestTrcl:
    def test_matches_info_nce(self):
        head = PretrainHead("trcl", dim=3, seed=0, dtype=F64)
        a, p = torch.randn(3, dtype=F64), torch.randn(3, dtype=F64)
        n = torch.randn(4, 3, dtype=F64)
        assert float(trcl_loss(head, a, p, n)) == pytest.approx(float(info_nce(a, p, n, tau=head.tau)))


class TestAtocl:
    def setup_method(self):
        self.entities = [
            MapEntity("a", "point", [(0.0, 0.0)], {"color": "red", "size": 1.0}),
            MapEntity("b", "point", [(0.0, 0.0)], {"color": "blue", "size": 3.0}),
        ]
        self.codec = fit_feature_codec(self.entities, bins=4)
        from mapvec.encoders import encode_feature

        self.blocks = torch.stack(
            [torch.tensor(encode_feature(self.codec, e), dtype=F64) for e in self.entities]
        )
        self.encoder = TokenEncoder(self.codec.widths, dim=6, seed=1, dtype=F64)
        self.head = PretrainHead("atocl", dim=6, seed=0, dtype=F64)

    def test_degenerate_rate_closed_form(self):
        policy = AugmentationPolicy("feature-dropout", rate=1e-12, seed=5)
        loss = float(atocl_loss(self.head, self.encoder, self.blocks, policy))
        z = self.encoder.forward_blocks(self.blocks)
        tau = self.head.tau
        expected = 0.0
        for i, j in ((0, 1), (1, 0)):
            cos_ij = float(torch.nn.functional.cosine_similarity(z[i], z[j], dim=0))
            expected += math.log(math.exp(1 / tau) + math.exp(cos_ij / tau)) - 1 / tau
        assert loss == pytest.approx(expected / 2, abs=1e-9)

    def test_deterministic_given_seed(self):
        policy = AugmentationPolicy("feature-replace", rate=0.5, seed=7)
        a = float(atocl_loss(self.head, self.encoder, self.blocks, policy))
        b = float(atocl_loss(self.head, self.encoder, self.blocks, policy))
        assert a == b

    def test_batch_of_one_rejected(self):
        policy = AugmentationPolicy("feature-dropout", rate=0.5, seed=7)
        with pytest.raises(UsageError, match=">= 2"):
            atocl_loss(self.head, self.encoder, self.blocks[:1], policy)


class TestNfi:
    def test_uniform_categorical_is_ln_c(self):
        ents = [MapEntity(f"e{i}", "point", [(0.0, 0.0)], {"f": v}) for i, v in enumerate("abcd")]
        codec = fit_feature_codec(ents, oov=False)
        head = PretrainHead("nfi", dim=3, codec=codec, seed=0, dtype=F64)
        with torch.no_grad():
            head.feature_head.weights[0].zero_()
        from mapvec.encoders import encode_all_indices

        idx = torch.from_numpy(encode_all_indices(codec, ents))
        h = torch.randn(4, 3, dtype=F64)
        assert float(nfi_loss(head, h, idx, codec)) == pytest.approx(math.log(4.0), abs=1e-9)

    def test_continuous_off_by_one_contributes_one(self):
        ents = [MapEntity(f"e{i}", "point", [(0.0, 0.0)], {"f": 1.0}) for i in range(3)]
        codec = fit_feature_codec(ents)  # constant feature, single bin centered at 1.0
        head = PretrainHead("nfi", dim=3, codec=codec, seed=0, dtype=F64)
        with torch.no_grad():
            head.feature_head.weights[0].zero_()  # prediction 0, target 1.0
        from mapvec.encoders import encode_all_indices

        idx = torch.from_numpy(encode_all_indices(codec, ents))
        h = torch.randn(3, 3, dtype=F64)
        assert float(nfi_loss(head, h, idx, codec)) == pytest.approx(1.0, abs=1e-12)

    def test_zero_loss_when_prediction_matches(self):
        ents = [MapEntity(f"e{i}", "point", [(0.0, 0.0)], {"f": 2.5}) for i in range(2)]
        codec = fit_feature_codec(ents)
        head = PretrainHead("nfi", dim=2, codec=codec, seed=0, dtype=F64)
        with torch.no_grad():
            head.feature_head.weights[0].copy_(torch.tensor([[2.5], [0.0]], dtype=F64))
        from mapvec.encoders import encode_all_indices

        idx = torch.from_numpy(encode_all_indices(codec, ents))
        h = torch.tensor([[1.0, 0.0], [1.0, 0.0]], dtype=F64)
        assert float(nfi_loss(head, h, idx, codec)) == pytest.approx(0.0, abs=1e-12)


def path_graph(n):
    vertices = [f"v{i}" for i in range(n)]
    edges = {(f"v{i}", f"v{i+1}"): 1.0 for i in range(n - 1)}
    return RelationNetwork(vertices=vertices, edges=edges, relation_kind="geographical")


class TestGau:
    def head(self):
        return PretrainHead("gau", dim=3, seed=0, dtype=F64)

    def test_orthogonal_rows_give_ln2(self):
        net = path_graph(3)
        h = torch.eye(3, dtype=F64)
        assert float(gau_loss(self.head(), h, net)) == pytest.approx(LN2, abs=1e-9)

    def test_perfect_logits_vanish(self):
        net = RelationNetwork(vertices=["a", "b"], edges={("a", "b"): 1.0}, relation_kind="geographical")
        h = torch.tensor([[10.0, 0.0, 0.0], [10.0, 0.0, 0.0]], dtype=F64)
        assert float(gau_loss(self.head(), h, net)) < 1e-9

    def test_matches_brute_force_on_path_graph(self):
        net = path_graph(3)
        h = torch.randn(3, 3, dtype=F64)
        loss = float(gau_loss(self.head(), h, net, seed=3))
        # Sampled set: positives (0,1), (1,2); the single unlinked pair (0,2).
        logits = [h[0] @ h[1], h[1] @ h[2], h[0] @ h[2]]
        targets = [1.0, 1.0, 0.0]
        expected = sum(
            math.log(1 + math.exp(-l)) if t == 1.0 else math.log(1 + math.exp(l))
            for l, t in zip(logits, targets)
        ) / 3
        assert loss == pytest.approx(expected, abs=1e-9)

    def test_edgeless_graph_rejected(self):
        net = RelationNetwork(vertices=["a", "b"], edges={}, relation_kind="geographical")
        with pytest.raises(UsageError, match="at least one edge"):
            gau_loss(self.head(), torch.eye(2, dtype=F64), net)


class TestNcl:
    def test_equal_similarities_give_ln2(self):
        net = RelationNetwork(
            vertices=["a", "b", "c"], edges={("a", "b"): 1.0}, relation_kind="geographical"
        )
        head = PretrainHead("ncl", dim=2, seed=0, dtype=F64)
        h = torch.tensor([[1.0, 0.0]] * 3, dtype=F64)
        loss = ncl_loss(head, h, net, anchor_index=0, seed=1)
        assert float(loss) == pytest.approx(LN2, abs=1e-9)

    def test_no_negatives_returns_skip_signal(self):
        vertices = ["a", "b", "c"]
        edges = {(o, d): 1.0 for o in vertices for d in vertices if o != d}
        net = RelationNetwork(vertices=vertices, edges=edges, relation_kind="geographical")
        head = PretrainHead("ncl", dim=2, seed=0, dtype=F64)
        assert ncl_loss(head, torch.randn(3, 2, dtype=F64), net, anchor_index=0) is None

    def test_isolated_anchor_returns_skip_signal(self):
        net = RelationNetwork(vertices=["a", "b"], edges={("b", "a"): 1.0}, relation_kind="geographical")
        head = PretrainHead("ncl", dim=2, seed=0, dtype=F64)
        assert ncl_loss(head, torch.randn(2, 2, dtype=F64), net, anchor_index=0) is None

    def test_deterministic_given_seed(self):
        net = path_graph(6)
        head = PretrainHead("ncl", dim=3, k_neg=2, seed=0, dtype=F64)
        h = torch.randn(6, 3, dtype=F64)
        a = float(ncl_loss(head, h, net, anchor_index=2, seed=9))
        b = float(ncl_loss(head, h, net, anchor_index=2, seed=9))
        assert a == b


class TestAgcl:
    def test_degenerate_rate_identical_rows_closed_form(self):
        from mapvec.pretrain import agcl_loss

        net = RelationNetwork(vertices=["a", "b", "c"], edges={}, relation_kind="geographical")
        enc = GraphEncoder(dim=3, layers=2, seed=2, dtype=F64)
        head = PretrainHead("agcl", dim=3, seed=0, dtype=F64)
        reps = torch.tensor([[1.0, 2.0, 3.0]], dtype=F64).repeat(3, 1)
        policy = AugmentationPolicy("edge-drop", rate=1e-12, seed=4)
        loss = float(agcl_loss(head, enc, reps, net, policy))
        assert loss == pytest.approx(math.log(3.0), abs=1e-9)

    def test_uniform_weights_drop_frequency(self):
        vertices = [f"v{i}" for i in range(40)]
        edges = {(vertices[i], vertices[(i + 1) % 40]): 2.0 for i in range(40)}
        net = RelationNetwork(vertices=vertices, edges=edges, relation_kind="geographical")
        probs = edge_drop_weights(net, rate=0.3)
        assert all(p == pytest.approx(0.3) for p in probs.values())
        rng = random.Random(0)
        policy = AugmentationPolicy("edge-drop", rate=0.3, seed=0)
        dropped = 0
        total = 0
        for _ in range(250):  # 250 * 40 = 10,000 edge draws
            kept = drop_edges(net, policy, rng)
            dropped += 40 - len(kept.edges)
            total += 40
        assert dropped / total == pytest.approx(0.3, abs=0.02)

    def test_deterministic_given_seed(self):
        net = path_graph(5)
        enc = GraphEncoder(dim=3, layers=1, seed=2, dtype=F64)
        head = PretrainHead("agcl", dim=3, seed=0, dtype=F64)
        reps = torch.randn(5, 3, dtype=F64)
        policy = AugmentationPolicy("edge-drop", rate=0.4, seed=11)
        from mapvec.pretrain import agcl_loss

        assert float(agcl_loss(head, enc, reps, net, policy)) == float(
            agcl_loss(head, enc, reps, net, policy)
        )


class TestTrajp:
    def test_uniform_logits_give_ln_v(self):
        enc = seq_encoder_passthrough(dim=4)
        head = PretrainHead("trajp", dim=4, seed=0, dtype=F64)
        entity_reps = torch.zeros(7, 4, dtype=F64)
        loss = trajp_loss(head, enc, entity_reps, [0, 1])
        assert float(loss) == pytest.approx(math.log(7.0), abs=1e-9)

    def test_correct_logit_margin_vanishes(self):
        enc = seq_encoder_passthrough(dim=4)
        head = PretrainHead("trajp", dim=4, seed=0, dtype=F64)
        entity_reps = torch.tensor([[1.0, 0.0, 0.0, 0.0], [100.0, 0.0, 0.0, 0.0]], dtype=F64)
        # States pass through, so the suffix logit for entity 1 is r0 . r1 = 100.
        loss = trajp_loss(head, enc, entity_reps, [0, 1])
        assert float(loss) < 1e-9

    def test_k5_mean_of_two_terms(self):
        enc = SequenceEncoder(dim=4, heads=2, hidden=8, max_len=8, seed=3, dtype=F64)
        head = PretrainHead("trajp", dim=4, seed=0, dtype=F64)
        entity_reps = torch.randn(6, 4, dtype=F64)
        traj = [2, 0, 5, 1, 4]
        loss = float(trajp_loss(head, enc, entity_reps, traj))
        states = enc(entity_reps[torch.tensor(traj)], causal=True)
        terms = []
        for pos in (3, 4):  # split = ceil(5/2) = 3
            logits = states[pos - 1] @ entity_reps.T
            terms.append(float(torch.nn.functional.cross_entropy(logits, torch.tensor(traj[pos]))))
        assert loss == pytest.approx(sum(terms) / 2, abs=1e-9)

    def test_length_one_rejected(self):
        enc = seq_encoder_passthrough(dim=4)
        head = PretrainHead("trajp", dim=4, seed=0, dtype=F64)
        with pytest.raises(UsageError, match=">= 2"):
            trajp_loss(head, enc, torch.zeros(3, 4, dtype=F64), [1])


class TestMtr:
    def test_single_mask_uniform_logits(self):
        enc = seq_encoder_passthrough(dim=4)
        head = PretrainHead("mtr", dim=4, seed=0, dtype=F64)
        entity_reps = torch.zeros(5, 4, dtype=F64)
        loss = mtr_loss(head, enc, entity_reps, [0, 1, 2], mask_ratio=0.1, seed=1)
        assert float(loss) == pytest.approx(math.log(5.0), abs=1e-9)

    def test_full_mask_means_three_terms(self):
        enc = SequenceEncoder(dim=4, heads=2, hidden=8, max_len=8, seed=3, dtype=F64)
        head = PretrainHead("mtr", dim=4, seed=0, dtype=F64)
        entity_reps = torch.randn(5, 4, dtype=F64)
        traj = [0, 3, 1]
        loss = float(mtr_loss(head, enc, entity_reps, traj, mask_ratio=1.0, seed=1))
        inputs = entity_reps[torch.tensor(traj)].clone()
        inputs[[0, 1, 2]] = head.mask_embedding.detach()
        states = enc(inputs, causal=False)
        logits = states @ entity_reps.T
        expected = float(torch.nn.functional.cross_entropy(logits, torch.tensor(traj)))
        assert loss == pytest.approx(expected, abs=1e-9)

    def test_contiguous_mode_masks_single_run(self):
        for seed in range(20):
            masked = mask_positions(10, mask_ratio=0.4, mask_mode="contiguous", seed=seed)
            assert len(masked) == 4
            assert masked == list(range(masked[0], masked[0] + 4))

    def test_nonpositive_ratio_rejected(self):
        enc = seq_encoder_passthrough(dim=4)
        head = PretrainHead("mtr", dim=4, seed=0, dtype=F64)
        with pytest.raises(UsageError, match="positive"):
            mtr_loss(head, enc, torch.zeros(3, 4, dtype=F64), [0, 1], mask_ratio=0.0)


class TestAtrcl:
    def test_zero_noise_views_identical(self):
        enc = seq_encoder_passthrough(dim=4)
        head = PretrainHead("atrcl", dim=4, seed=0, dtype=F64)
        entity_reps = torch.randn(6, 4, dtype=F64)
        trajs = [[0, 1, 2], [3, 4]]
        policy = AugmentationPolicy("noise", rate=1e-12, seed=2)
        loss = float(atrcl_loss(head, enc, entity_reps, trajs, policy))
        z = torch.stack([entity_reps[t].mean(dim=0) for t in [[0, 1, 2], [3, 4]]])
        tau = head.tau
        expected = 0.0
        for i, j in ((0, 1), (1, 0)):
            cos_ij = float(torch.nn.functional.cosine_similarity(z[i], z[j], dim=0))
            expected += math.log(math.exp(1 / tau) + math.exp(cos_ij / tau)) - 1 / tau
        assert loss == pytest.approx(expected / 2, abs=1e-6)

    def test_point_delete_survival_rate(self):
        rng = random.Random(3)
        policy = AugmentationPolicy("point-delete", rate=0.25, seed=0)
        survived = 0
        for _ in range(10_000 // 20):
            survived += len(augment_positions(list(range(20)), 50, policy, rng))
        expected = 20 * (1 - 0.25) * (10_000 // 20)
        assert survived == pytest.approx(expected, abs=3 * (10_000 // 20))

    def test_batch_of_one_rejected(self):
        head = PretrainHead("atrcl", dim=4, seed=0, dtype=F64)
        policy = AugmentationPolicy("noise", rate=0.1, seed=2)
        with pytest.raises(UsageError, match=">= 2"):
            atrcl_loss(head, None, torch.randn(3, 4, dtype=F64), [[0, 1]], policy)

    def test_deterministic_given_seed(self):
        enc = SequenceEncoder(dim=4, heads=2, hidden=8, max_len=8, seed=3, dtype=F64)
        head = PretrainHead("atrcl", dim=4, seed=0, dtype=F64)
        entity_reps = torch.randn(6, 4, dtype=F64)
        trajs = [[0, 1, 2, 3], [3, 4, 5]]
        policy = AugmentationPolicy("point-replace", rate=0.5, seed=8)
        a = float(atrcl_loss(head, enc, entity_reps, trajs, policy))
        b = float(atrcl_loss(head, enc, entity_reps, trajs, policy))
        assert a == b
