"""Differentially private SGD baseline: per-microbatch clipping plus noise.

Each batch is cut into microbatches; every microbatch's mean gradient is
clipped to joint L2 norm C, the clipped gradients are summed, spherical
Gaussian noise with per-coordinate std noise_multiplier*C is added, and the
result is divided by the microbatch count before the SGD step. With
microbatch_size 1 this is true per-example clipping.

Microbatches run through the model in train mode, so normalization layers
see microbatch statistics (a single-example microbatch therefore normalizes
to zero and trains like a linear probe through the skip path; use larger
microbatches when batch statistics should stay meaningful).
"""

import time
from dataclasses import dataclass

import numpy as np

from . import nn
from .model import TrainingDiverged, evaluate_accuracy

__all__ = ["DpSgdConfig", "clip_gradient", "clip_gradient_list", "noisy_aggregate", "dpsgd_train"]


@dataclass
class DpSgdConfig:
    clip_norm: float = 1.0
    noise_multiplier: float = 1.1
    microbatch_size: int = 1
    epochs: int = 60
    batch_size: int = 128
    learning_rate: float = 0.1
    momentum: float = 0.0
    # (1-based epoch, divisor) pairs, same semantics as the plain trainer
    lr_schedule: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.noise_multiplier < 0:
            raise ValueError("noise_multiplier must be nonnegative")
        if self.microbatch_size < 1 or self.batch_size < 1:
            raise ValueError("batch and microbatch sizes must be >= 1")


def clip_gradient(g, clip_norm):
    """Scale g to L2 norm at most clip_norm: g * min(1, C/||g||)."""
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    g = np.asarray(g, dtype=float)
    norm = np.linalg.norm(g)
    if norm <= clip_norm:
        return g.copy()
    return g * (clip_norm / norm)


def clip_gradient_list(grads, clip_norm):
    """Clip a list of gradient arrays by their joint L2 norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total <= clip_norm:
        return [g.copy() for g in grads]
    factor = clip_norm / total
    return [g * factor for g in grads]


def noisy_aggregate(per_example_grads, clip_norm, noise_multiplier, rng):
    """(sum of clipped grads + N(0, (sigma*C)^2 I)) / count, per parameter.

    `per_example_grads` is a list (one entry per example or microbatch) of
    gradient-array lists. Noise is drawn once per parameter array, in
    parameter order; nothing is drawn when noise_multiplier == 0.
    """
    if not per_example_grads:
        raise ValueError("empty batch")
    count = len(per_example_grads)
    totals = [np.zeros_like(g) for g in per_example_grads[0]]
    for example in per_example_grads:
        for acc, g in zip(totals, example):
            acc += g
    if noise_multiplier > 0:
        std = noise_multiplier * clip_norm
        for acc in totals:
            acc += std * rng.standard_normal(acc.shape)
    return [acc / count for acc in totals]


def dpsgd_train(model, train_set, cfg, rng, test_set=None):
    """Train with clipped, noised gradients; returns a history like train().

    Uses the same child-stream layout (shuffle, noise, eval) as the plain
    trainer so that disabling the mechanism (noise_multiplier 0, huge
    clip_norm, microbatch_size == batch_size) reproduces plain SGD runs
    bit for bit under a shared seed.
    """
    x_train, y_train = train_set
    x_train = np.asarray(x_train, dtype=float)
    y_train = np.asarray(y_train)
    n = x_train.shape[0]
    shuffle_rng, noise_rng, eval_rng = rng.spawn(3)
    opt = nn.SgdMomentum(cfg.learning_rate, cfg.momentum)
    schedule = dict(cfg.lr_schedule)
    history = {"loss": [], "train_acc": [], "test_acc": [], "gap": [],
               "epoch_seconds": [], "noisy_updates": 0}
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        if epoch in schedule:
            opt.learning_rate /= schedule[epoch]
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch_idx = order[start:start + cfg.batch_size]
            clipped = []
            for mb_start in range(0, len(batch_idx), cfg.microbatch_size):
                idx = batch_idx[mb_start:mb_start + cfg.microbatch_size]
                logits = model.forward(x_train[idx], noise_rng, train=True)
                loss, grad = nn.cross_entropy_batch(logits, y_train[idx])
                if not np.isfinite(loss):
                    raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
                model.zero_grads()
                model.backward(grad)
                clipped.append(clip_gradient_list(model.grads(), cfg.clip_norm))
                total_loss += loss * len(idx)
            update = noisy_aggregate(clipped, cfg.clip_norm, cfg.noise_multiplier, noise_rng)
            opt.step(model.params(), update)
            history["noisy_updates"] += 1
        epoch_eval = eval_rng.spawn(1)[0]
        train_acc = evaluate_accuracy(model, x_train, y_train, epoch_eval)
        test_acc = float("nan")
        if test_set is not None:
            test_acc = evaluate_accuracy(model, test_set[0], test_set[1], epoch_eval)
        history["loss"].append(total_loss / n)
        history["train_acc"].append(train_acc)
        history["test_acc"].append(test_acc)
        history["gap"].append(train_acc - test_acc if test_set is not None else float("nan"))
        history["epoch_seconds"].append(time.perf_counter() - t0)
    return history
