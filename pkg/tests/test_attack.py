import itertools

import numpy as np
import pytest

from respriv.attack import (DEFAULT_THRESHOLDS, auc_trapezoid, evaluate_attack,
                            extract_features, precision_recall_at, roc_curve,
                            run_membership_experiment, split_dataset, train_attack_model)
from respriv.datasets import make_blobs
from respriv.model import NoiseConfig, ResidualNet, TrainConfig


def concordance_auc(scores, labels):
    """Brute-force pairwise concordance with ties counted one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    pos = scores[labels]
    neg = scores[~labels]
    total = 0.0
    for p, q in itertools.product(pos, neg):
        if p > q:
            total += 1.0
        elif p == q:
            total += 0.5
    return total / (len(pos) * len(neg))


class TestSplitDataset:
    def test_four_disjoint_equal_sets(self):
        split = split_dataset(8, np.random.default_rng(0))
        parts = [split.shadow_train, split.shadow_out, split.target_train, split.target_out]
        assert all(p.size == 2 for p in parts)
        assert len(set(np.concatenate(parts).tolist())) == 8

    def test_same_seed_identical(self):
        a = split_dataset(40, np.random.default_rng(5))
        b = split_dataset(40, np.random.default_rng(5))
        for pa, pb in zip((a.shadow_train, a.shadow_out, a.target_train, a.target_out),
                          (b.shadow_train, b.shadow_out, b.target_train, b.target_out)):
            np.testing.assert_array_equal(pa, pb)

    def test_remainder_discarded_and_disjoint(self):
        split = split_dataset(10, np.random.default_rng(1))
        parts = [split.shadow_train, split.shadow_out, split.target_train, split.target_out]
        assert all(p.size == 2 for p in parts)
        combined = np.concatenate(parts)
        # exhaustive disjointness check
        for i, j in itertools.combinations(range(len(combined)), 2):
            assert combined[i] != combined[j]

    def test_stratified_keeps_class_balance(self):
        labels = np.array([0] * 20 + [1] * 20)
        split = split_dataset(40, np.random.default_rng(2), labels=labels)
        for part in (split.shadow_train, split.shadow_out, split.target_train, split.target_out):
            assert labels[part].sum() == 5  # 5 of each class per part

    def test_too_small_pool(self):
        with pytest.raises(ValueError):
            split_dataset(3, np.random.default_rng(0))


class FixedProbModel:
    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)
        self.n_classes = self.probs.shape[-1]

    def predict_proba(self, x, rng):
        return np.tile(self.probs, (len(x), 1))


class TestExtractFeatures:
    def test_sorted_descending(self):
        model = FixedProbModel([0.3, 0.7])
        feats = extract_features(model, np.zeros((1, 4)), 2, np.random.default_rng(0))
        np.testing.assert_allclose(feats, [[0.7, 0.3]])

    def test_uniform_ten_class(self):
        model = FixedProbModel(np.full(10, 0.1))
        feats = extract_features(model, np.zeros((2, 4)), 3, np.random.default_rng(0))
        np.testing.assert_allclose(feats, np.full((2, 3), 0.1))

    def test_full_k_sums_to_one(self):
        rng = np.random.default_rng(1)
        net = ResidualNet.build(5, 1, 4, rng)
        feats = extract_features(net, rng.standard_normal((6, 5)), 4, rng)
        np.testing.assert_allclose(feats.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(np.diff(feats, axis=1) <= 0)

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            extract_features(FixedProbModel([0.5, 0.5]), np.zeros((1, 2)), 3,
                             np.random.default_rng(0))


class TestAttackModel:
    def _separable_records(self, rng, n=200):
        members = np.column_stack([rng.uniform(0.95, 1.0, n), rng.uniform(0.0, 0.05, n)])
        outsiders = np.column_stack([rng.uniform(0.5, 0.6, n), rng.uniform(0.4, 0.5, n)])
        feats = np.vstack([members, outsiders])
        labels = np.concatenate([np.ones(n, dtype=int), np.zeros(n, dtype=int)])
        return feats, labels

    def test_separable_features_learned(self):
        rng = np.random.default_rng(0)
        feats, labels = self._separable_records(rng)
        mlp = train_attack_model(feats, labels, np.random.default_rng(1))
        acc = ((mlp.membership_proba(feats) >= 0.5).astype(int) == labels).mean()
        assert acc >= 0.95

    def test_shuffled_labels_near_chance(self):
        aucs = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            feats = rng.uniform(0.5, 1.0, (240, 2))
            labels = rng.integers(0, 2, 240)
            while len(np.unique(labels)) < 2:
                labels = rng.integers(0, 2, 240)
            mlp = train_attack_model(feats[:160], labels[:160], np.random.default_rng(seed + 10))
            scores = mlp.membership_proba(feats[160:])
            fpr, tpr = roc_curve(scores, labels[160:])
            aucs.append(auc_trapezoid(fpr, tpr))
        assert 0.4 <= np.mean(aucs) <= 0.6

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(3)
        feats, labels = self._separable_records(rng, n=50)
        a = train_attack_model(feats, labels, np.random.default_rng(9))
        b = train_attack_model(feats, labels, np.random.default_rng(9))
        np.testing.assert_array_equal(a.membership_proba(feats), b.membership_proba(feats))

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            train_attack_model(np.ones((10, 2)), np.ones(10, dtype=int),
                               np.random.default_rng(0))


class TestRocAuc:
    def test_perfect_separation(self):
        scores = np.array([1.0, 1.0, 0.0, 0.0])
        labels = np.array([1, 1, 0, 0])
        fpr, tpr = roc_curve(scores, labels)
        assert auc_trapezoid(fpr, tpr) == pytest.approx(1.0, abs=1e-15)
        rows = precision_recall_at(scores, labels, [0.5])
        assert rows[0][1] == 1.0 and rows[0][2] == 1.0

    def test_constant_scores_are_chance(self):
        fpr, tpr = roc_curve(np.full(10, 0.5), np.array([1, 0] * 5))
        assert auc_trapezoid(fpr, tpr) == pytest.approx(0.5, abs=1e-15)

    def test_pair_counting_example(self):
        scores = np.array([0.9, 0.4, 0.6, 0.1])
        labels = np.array([1, 1, 0, 0])
        fpr, tpr = roc_curve(scores, labels)
        assert auc_trapezoid(fpr, tpr) == pytest.approx(0.75, abs=1e-15)

    def test_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(0)
        scores = rng.random(50)
        labels = rng.integers(0, 2, 50)
        labels[0], labels[1] = 0, 1
        fpr, tpr = roc_curve(scores, labels)
        assert (fpr[0], tpr[0]) == (0.0, 0.0)
        assert (fpr[-1], tpr[-1]) == (1.0, 1.0)
        assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)

    @pytest.mark.parametrize("seed", range(6))
    def test_trapezoid_equals_concordance(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(20, 200))
        # quantized scores force plenty of ties
        scores = np.round(rng.random(n), 2)
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        fpr, tpr = roc_curve(scores, labels)
        assert auc_trapezoid(fpr, tpr) == pytest.approx(concordance_auc(scores, labels),
                                                        abs=1e-9)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            roc_curve(np.ones(4), np.ones(4))

    def test_precision_zero_when_no_positives_predicted(self):
        rows = precision_recall_at(np.zeros(4), np.array([1, 1, 0, 0]), [0.5])
        assert rows[0][1] == 0.0 and rows[0][2] == 0.0


class ScoreModel:
    """Stand-in target whose class-1 probability encodes fixed scores."""

    def __init__(self, scores_by_index):
        self.scores_by_index = scores_by_index
        self.n_classes = 2

    def predict_proba(self, x, rng):
        p1 = np.array([self.scores_by_index[int(v)] for v in x[:, 0]])
        return np.column_stack([1.0 - p1, p1])


class PassthroughAttack:
    def membership_proba(self, features):
        return features[:, 0]


class TestEvaluateAttack:
    def test_report_structure(self):
        rng = np.random.default_rng(0)
        x, y = make_blobs(80, 4, rng)
        split = split_dataset(80, rng, labels=y)
        net = ResidualNet.build(4, 1, 2, rng)
        feats = extract_features(net, x[split.shadow_train], 2, rng)
        labels = np.concatenate([np.ones(len(feats), dtype=int), np.zeros(len(feats), dtype=int)])
        feats = np.vstack([feats, extract_features(net, x[split.shadow_out], 2, rng)])
        mlp = train_attack_model(feats, labels, rng, epochs=5)
        report = evaluate_attack(mlp, net, split, (x, y), rng)
        assert 0.0 <= report.auc <= 1.0
        assert report.roc_points[0] == (0.0, 0.0)
        assert report.roc_points[-1] == (1.0, 1.0)
        assert report.thresholds == DEFAULT_THRESHOLDS
        fp, fn, n_neg, n_pos = report.error_counts(0.5)
        assert n_neg == split.target_out.size and n_pos == split.target_train.size


class TestPipeline:
    def test_smoke_run_completes(self):
        rng = np.random.default_rng(0)
        x, y = make_blobs(120, 6, rng, separation=2.0)
        cfg = TrainConfig(epochs=4, batch_size=16, learning_rate=0.1)

        def factory(r):
            return ResidualNet.build(6, 1, 2, r)

        result = run_membership_experiment((x, y), factory, factory, cfg, cfg,
                                           np.random.default_rng(1), attack_epochs=5)
        report = result["report"]
        assert np.isfinite(report.auc)
        assert np.isfinite(result["target_train_acc"])
        assert np.isfinite(result["target_test_acc"])

    def test_noisy_target_completes(self):
        rng = np.random.default_rng(2)
        x, y = make_blobs(120, 6, rng, separation=2.0)
        cfg = TrainConfig(epochs=4, batch_size=16)

        def noisy(r):
            return ResidualNet.build(6, 1, 2, r,
                                     noise=NoiseConfig("additive", gamma=0.5, pi=0.25))

        def clean(r):
            return ResidualNet.build(6, 1, 2, r)

        result = run_membership_experiment((x, y), noisy, clean, cfg, cfg,
                                           np.random.default_rng(3), attack_epochs=5)
        assert np.isfinite(result["report"].auc)

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(4)
        x, y = make_blobs(100, 4, rng)
        cfg = TrainConfig(epochs=3, batch_size=16)

        def factory(r):
            return ResidualNet.build(4, 1, 2, r)

        a = run_membership_experiment((x, y), factory, factory, cfg, cfg,
                                      np.random.default_rng(7), attack_epochs=4)
        b = run_membership_experiment((x, y), factory, factory, cfg, cfg,
                                      np.random.default_rng(7), attack_epochs=4)
        assert a["report"].auc == b["report"].auc
        np.testing.assert_array_equal(a["report"].member_scores, b["report"].member_scores)
