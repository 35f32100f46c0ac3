"""Shadow-model membership inference attack and its evaluation.

Pipeline: split the pool into shadow/target halves (each again split into
an in-training and a held-out part), train the shadow model, label its
top-k prediction probabilities as member/non-member features, fit a small
MLP attack classifier on them, then score the target model's training and
held-out points and report ROC/AUC plus precision/recall at fixed
thresholds.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .model import train as train_model

__all__ = [
    "DatasetSplit",
    "AttackReport",
    "AttackMlp",
    "split_dataset",
    "extract_features",
    "train_attack_model",
    "roc_curve",
    "auc_trapezoid",
    "precision_recall_at",
    "evaluate_attack",
    "run_membership_experiment",
]

DEFAULT_THRESHOLDS = (0.4, 0.5, 0.6, 0.7)


@dataclass
class DatasetSplit:
    shadow_train: np.ndarray
    shadow_out: np.ndarray
    target_train: np.ndarray
    target_out: np.ndarray

    def validate(self):
        parts = [self.shadow_train, self.shadow_out, self.target_train, self.target_out]
        all_idx = np.concatenate(parts)
        if len(np.unique(all_idx)) != all_idx.size:
            raise ValueError("split parts overlap")
        if self.shadow_train.size != self.shadow_out.size:
            raise ValueError("shadow halves must have equal size")
        if self.target_train.size != self.target_out.size:
            raise ValueError("target halves must have equal size")
        return self


def split_dataset(n, rng, labels=None):
    """Random partition into four equal disjoint index sets.

    Uses the largest multiple of 4 (per class, when `labels` enables
    stratification) and discards the remainder. Deterministic per rng state.
    """
    if n < 4:
        raise ValueError("need at least 4 points to split")
    groups = [[], [], [], []]
    if labels is None:
        pools = [np.arange(n)]
    else:
        labels = np.asarray(labels)
        if labels.shape[0] != n:
            raise ValueError("labels length must match n")
        pools = [np.flatnonzero(labels == c) for c in np.unique(labels)]
    for pool in pools:
        perm = pool[rng.permutation(pool.size)]
        m = pool.size // 4
        for g in range(4):
            groups[g].append(perm[g * m:(g + 1) * m])
    parts = [np.sort(np.concatenate(g)) for g in groups]
    return DatasetSplit(*parts).validate()


def extract_features(model, x, k, rng):
    """Top-k class probabilities per row, sorted descending."""
    probs = model.predict_proba(np.asarray(x, dtype=float), rng)
    if k > probs.shape[1]:
        raise ValueError(f"k={k} exceeds class count {probs.shape[1]}")
    return -np.sort(-probs, axis=1)[:, :k]


class AttackMlp:
    """k -> 64 -> 2 perceptron with softmax membership output."""

    def __init__(self, n_features, rng, hidden=64):
        self.layers = [
            nn.Dense.init(hidden, n_features, rng, bias=True),
            nn.Activation("relu"),
            nn.Dense.init(2, hidden, rng, bias=True),
        ]

    def forward(self, x, train=True):
        h = x
        for layer in self.layers:
            h = layer.forward(h, train)
        return h

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def grads(self):
        return [g for layer in self.layers for g in layer.grads()]

    def zero_grads(self):
        for g in self.grads():
            g[...] = 0.0

    def membership_proba(self, features):
        """Probability that each feature row belongs to a training member."""
        return nn.softmax(self.forward(np.asarray(features, dtype=float), train=False))[:, 1]


def train_attack_model(features, labels, rng, epochs=50, learning_rate=0.1, batch_size=64):
    """Fit the attack MLP (Adam) on member/non-member feature rows."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        raise ValueError("attack training needs both member and non-member records")
    mlp = AttackMlp(features.shape[1], rng)
    opt = nn.Adam(learning_rate)
    n = features.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            logits = mlp.forward(features[idx], train=True)
            _, grad = nn.cross_entropy_batch(logits, labels[idx])
            mlp.zero_grads()
            mlp.backward(grad)
            opt.step(mlp.params(), mlp.grads())
    return mlp


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def roc_curve(scores, labels):
    """ROC points swept over every score cutpoint, ties grouped.

    Returns (fpr, tpr) arrays running from (0, 0) to (1, 1), both
    nondecreasing.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc needs both positive and negative examples")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = labels[order].astype(float)
    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(1.0 - sorted_pos)
    # keep only the last index of each tied score group
    distinct = np.flatnonzero(np.diff(sorted_scores, append=np.nan))
    fpr = np.concatenate([[0.0], fp[distinct] / n_neg])
    tpr = np.concatenate([[0.0], tp[distinct] / n_pos])
    return fpr, tpr


def auc_trapezoid(fpr, tpr):
    return float(np.trapezoid(tpr, fpr))


def precision_recall_at(scores, labels, thresholds):
    """(threshold, precision, recall) rows for score >= threshold positives."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    rows = []
    for t in thresholds:
        predicted = scores >= t
        tp = int((predicted & labels).sum())
        fp = int((predicted & ~labels).sum())
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / n_pos if n_pos > 0 else 0.0
        rows.append((float(t), precision, recall))
    return rows


@dataclass
class AttackReport:
    auc: float
    roc_points: list                 # (fpr, tpr) pairs
    table: list                      # (threshold, precision, recall) rows
    thresholds: tuple
    member_scores: np.ndarray = field(repr=False, default=None)
    non_member_scores: np.ndarray = field(repr=False, default=None)

    def error_counts(self, threshold=0.5):
        """(false positives, false negatives, negatives, positives) at a cut."""
        fp = int((self.non_member_scores >= threshold).sum())
        fn = int((self.member_scores < threshold).sum())
        return fp, fn, self.non_member_scores.size, self.member_scores.size


def evaluate_attack(attack_model, target_model, split, data, rng,
                    thresholds=DEFAULT_THRESHOLDS, feature_k=None):
    """Score the target's members vs held-out points and build the report."""
    x, y = data
    x = np.asarray(x, dtype=float)
    if split.target_train.size == 0 or split.target_out.size == 0:
        raise ValueError("target split is empty")
    if feature_k is None:
        feature_k = _default_k(target_model)
    member_feats = extract_features(target_model, x[split.target_train], feature_k, rng)
    non_member_feats = extract_features(target_model, x[split.target_out], feature_k, rng)
    member_scores = attack_model.membership_proba(member_feats)
    non_member_scores = attack_model.membership_proba(non_member_feats)
    scores = np.concatenate([member_scores, non_member_scores])
    labels = np.concatenate([np.ones(member_scores.size), np.zeros(non_member_scores.size)])
    fpr, tpr = roc_curve(scores, labels)
    return AttackReport(
        auc=auc_trapezoid(fpr, tpr),
        roc_points=list(zip(fpr.tolist(), tpr.tolist())),
        table=precision_recall_at(scores, labels, thresholds),
        thresholds=tuple(thresholds),
        member_scores=member_scores,
        non_member_scores=non_member_scores,
    )


def _default_k(model):
    n_classes = model.members[0].n_classes if hasattr(model, "members") else model.n_classes
    return 3 if n_classes > 2 else 2


def run_membership_experiment(data, target_factory, shadow_factory,
                              target_cfg, shadow_cfg, rng,
                              thresholds=DEFAULT_THRESHOLDS, feature_k=None,
                              stratified=True, attack_epochs=50,
                              attack_learning_rate=0.1, n_threads=1,
                              train_fn=None):
    """Full shadow-model pipeline; returns the report plus utility numbers.

    `target_factory(rng)` / `shadow_factory(rng)` build untrained models;
    `train_fn(model, train_set, cfg, rng, test_set)` defaults to the
    standard trainer and exists so a differentially private trainer can be
    swapped in for the target.
    """
    x, y = data
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    (split_rng, shadow_init_rng, shadow_train_rng, feat_rng, attack_rng,
     target_init_rng, target_train_rng, eval_rng) = rng.spawn(8)

    split = split_dataset(len(y), split_rng, labels=y if stratified else None)

    shadow = shadow_factory(shadow_init_rng)
    shadow_hist = train_model(shadow, (x[split.shadow_train], y[split.shadow_train]),
                              shadow_cfg, shadow_train_rng,
                              test_set=(x[split.shadow_out], y[split.shadow_out]),
                              n_threads=n_threads)
    if feature_k is None:
        feature_k = _default_k(shadow)
    feats_in = extract_features(shadow, x[split.shadow_train], feature_k, feat_rng)
    feats_out = extract_features(shadow, x[split.shadow_out], feature_k, feat_rng)
    attack_features = np.vstack([feats_in, feats_out])
    attack_labels = np.concatenate([np.ones(len(feats_in), dtype=int),
                                    np.zeros(len(feats_out), dtype=int)])
    attack_model = train_attack_model(attack_features, attack_labels, attack_rng,
                                      epochs=attack_epochs,
                                      learning_rate=attack_learning_rate)

    target = target_factory(target_init_rng)
    fit = train_fn if train_fn is not None else train_model
    target_hist = fit(target, (x[split.target_train], y[split.target_train]),
                      target_cfg, target_train_rng,
                      test_set=(x[split.target_out], y[split.target_out]))

    report = evaluate_attack(attack_model, target, split, (x, y), eval_rng,
                             thresholds=thresholds, feature_k=feature_k)
    return {
        "report": report,
        "split": split,
        "target_history": target_hist,
        "shadow_history": shadow_hist,
        "target_train_acc": _final(target_hist, "train_acc"),
        "target_test_acc": _final(target_hist, "test_acc"),
        "shadow_train_acc": _final(shadow_hist, "train_acc"),
        "shadow_test_acc": _final(shadow_hist, "test_acc"),
    }


def _final(history, key):
    value = history.get(key)
    if isinstance(value, list):
        return value[-1] if value else float("nan")
    return value
