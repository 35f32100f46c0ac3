"""Residual networks with noise-injected residual mappings.

A network is M residual blocks of constant width d followed by a linear
K-class head. Each block computes x + BN(act(U x)) where U is a dense or
circulant square matrix. Noise is injected according to the configured
strategy in BOTH training and evaluation forwards:

* additive:        input gets + pi*n, every block output gets + gamma*n
* multiplicative:  every block output gets + gamma*clip(x, eta) (.) n and
                   the head output gets + pi*||x||_2 * n per logit row,
                   where clip floors magnitudes away from zero

with n drawn fresh from a standard normal on every forward pass.
"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nn

STRATEGIES = ("none", "additive", "multiplicative")

__all__ = [
    "NoiseConfig",
    "TrainConfig",
    "ResidualNet",
    "EnsembleModel",
    "TrainingDiverged",
    "clip_away_from_zero",
    "input_perturb",
    "ensemble_predict",
    "train",
    "evaluate_accuracy",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass
class NoiseConfig:
    """Noise strategy plus its coefficients (gamma, pi, eta)."""

    strategy: str = "none"
    gamma: float = 0.0
    pi: float = 0.0
    eta: float = 0.1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.gamma < 0 or self.pi < 0:
            raise ValueError("gamma and pi must be nonnegative")
        if self.strategy == "none" and (self.gamma != 0 or self.pi != 0):
            raise ValueError("strategy 'none' requires gamma == pi == 0")
        if self.strategy == "multiplicative" and self.eta <= 0:
            raise ValueError("multiplicative strategy requires eta > 0")

    def to_dict(self):
        return {"strategy": self.strategy, "gamma": self.gamma, "pi": self.pi, "eta": self.eta}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    optimizer: str = "sgd"
    learning_rate: float = 0.1
    momentum: float = 0.9
    # (1-based epoch, divisor) pairs applied when that epoch starts
    lr_schedule: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class TrainingDiverged(RuntimeError):
    pass


def clip_away_from_zero(x, eta):
    """Floor each coordinate's magnitude at eta, keeping its sign (sgn(0) := +1)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    x = np.asarray(x, dtype=float)
    sign = np.where(x >= 0.0, 1.0, -1.0)
    return sign * np.maximum(np.abs(x), eta)


def input_perturb(x, pi, rng):
    """x + pi*n with a fresh standard-normal draw (no draw when pi == 0)."""
    x = np.asarray(x, dtype=float)
    if pi == 0:
        return x.copy()
    return x + pi * rng.standard_normal(x.shape)


class ResidualBlock:
    """One residual mapping x -> x + BN(act(U x)) plus strategy noise."""

    def __init__(self, linear, activation, batchnorm):
        self.linear = linear
        self.act = activation
        self.bn = batchnorm

    def forward(self, x, noise, rng, train, skip):
        h = self.bn.forward(self.act.forward(self.linear.forward(x, train), train), train)
        out = x + h if skip else h
        self._skip = skip
        self._noise_grad_x = None
        if noise.strategy == "additive" and noise.gamma > 0:
            out = out + noise.gamma * rng.standard_normal(h.shape)
        elif noise.strategy == "multiplicative" and noise.gamma > 0:
            n = rng.standard_normal(h.shape)
            out = out + noise.gamma * clip_away_from_zero(x, noise.eta) * n
            # clip is identity where |x| > eta and constant elsewhere
            self._noise_grad_x = noise.gamma * n * (np.abs(x) > noise.eta)
        return out

    def backward(self, grad_out):
        g = self.linear.backward(self.act.backward(self.bn.backward(grad_out)))
        if self._skip:
            g = g + grad_out
        if self._noise_grad_x is not None:
            g = g + grad_out * self._noise_grad_x
        return g

    def layers(self):
        return (self.linear, self.act, self.bn)


class ResidualNet:
    """Residual network of M width-d blocks with a K-class linear head."""

    def __init__(self, blocks, head, noise=None, skip_connections=True, head_norm_bound=None):
        self.blocks = list(blocks)
        self.head = head
        self.noise = noise if noise is not None else NoiseConfig()
        self.skip_connections = bool(skip_connections)
        self.head_norm_bound = head_norm_bound
        if not self.blocks:
            raise ValueError("need at least one residual block")

    @classmethod
    def build(cls, d, n_blocks, n_classes, rng, noise=None, block_kind="dense",
              activation="relu", skip_connections=True, head_norm_bound=None):
        blocks = []
        for _ in range(n_blocks):
            if block_kind == "dense":
                linear = nn.Dense.init(d, d, rng)
            elif block_kind == "circulant":
                linear = nn.Circulant.init(d, rng)
            else:
                raise ValueError(f"unknown block kind {block_kind!r}")
            blocks.append(ResidualBlock(linear, nn.Activation(activation), nn.BatchNorm(d)))
        head = nn.Dense.init(n_classes, d, rng)
        return cls(blocks, head, noise, skip_connections, head_norm_bound)

    @property
    def input_dim(self):
        return self.head.weight.shape[1]

    @property
    def n_classes(self):
        return self.head.weight.shape[0]

    @property
    def n_blocks(self):
        return len(self.blocks)

    def forward(self, x, rng, train=True):
        """Logits for a batch x of shape (n, d); draws fresh noise per call."""
        h = np.asarray(x, dtype=float)
        if h.ndim == 1:
            h = h[None, :]
        noise = self.noise
        if noise.strategy == "additive":
            h = input_perturb(h, noise.pi, rng)
        for block in self.blocks:
            h = block.forward(h, noise, rng, train, self.skip_connections)
        self._head_in = h
        logits = self.head.forward(h, train)
        self._out_noise = None
        if noise.strategy == "multiplicative" and noise.pi > 0:
            norms = np.linalg.norm(h, axis=1)
            n = rng.standard_normal(logits.shape)
            logits = logits + noise.pi * norms[:, None] * n
            self._out_noise = (n, norms)
        return logits

    def backward(self, grad_logits):
        g = self.head.backward(grad_logits)
        if self._out_noise is not None:
            n, norms = self._out_noise
            safe = np.where(norms > 0, norms, 1.0)
            scale = self.noise.pi * (grad_logits * n).sum(axis=1) / safe
            g = g + np.where(norms[:, None] > 0, scale[:, None] * self._head_in, 0.0)
        for block in reversed(self.blocks):
            g = block.backward(g)
        return g

    def predict_proba(self, x, rng):
        return nn.softmax(self.forward(x, rng, train=False))

    def params(self):
        out = []
        for b in self.blocks:
            for layer in b.layers():
                out.extend(layer.params())
        out.extend(self.head.params())
        return out

    def grads(self):
        out = []
        for b in self.blocks:
            for layer in b.layers():
                out.extend(layer.grads())
        out.extend(self.head.grads())
        return out

    def zero_grads(self):
        for g in self.grads():
            g[...] = 0.0

    def project_head(self):
        """Scale head rows back onto the norm ball when a bound is set."""
        if self.head_norm_bound is None:
            return
        w = self.head.weight
        norms = np.linalg.norm(w, axis=1, keepdims=True)
        factor = np.minimum(1.0, self.head_norm_bound / np.maximum(norms, 1e-30))
        w *= factor


class EnsembleModel:
    """k independently trained networks sharing one architecture."""

    def __init__(self, members):
        self.members = list(members)
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        d0 = self.members[0].input_dim
        k0 = self.members[0].n_classes
        m0 = self.members[0].n_blocks
        for m in self.members[1:]:
            if (m.input_dim, m.n_classes, m.n_blocks) != (d0, k0, m0):
                raise ValueError("ensemble members must share architecture")

    @classmethod
    def build(cls, k, d, n_blocks, n_classes, rng, **kwargs):
        seqs = rng.spawn(k)
        return cls([ResidualNet.build(d, n_blocks, n_classes, r, **kwargs) for r in seqs])

    @property
    def k(self):
        return len(self.members)

    def predict_proba(self, x, rng):
        return np.mean([m.predict_proba(x, rng) for m in self.members], axis=0)


def ensemble_predict(ensemble, x, rng):
    """Arithmetic mean of the members' softmax outputs."""
    return ensemble.predict_proba(x, rng)


def evaluate_accuracy(model, x, y, rng):
    probs = model.predict_proba(x, rng)
    return float((probs.argmax(axis=1) == np.asarray(y)).mean())


def _train_single(model, train_set, cfg, rng, test_set):
    x_train, y_train = train_set
    x_train = np.asarray(x_train, dtype=float)
    y_train = np.asarray(y_train)
    n = x_train.shape[0]
    shuffle_rng, noise_rng, eval_rng = rng.spawn(3)
    opt = nn.make_optimizer(cfg.optimizer, cfg.learning_rate, cfg.momentum)
    schedule = dict(cfg.lr_schedule)
    history = {"loss": [], "train_acc": [], "test_acc": [], "gap": [], "epoch_seconds": []}
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        if epoch in schedule:
            opt.learning_rate /= schedule[epoch]
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            logits = model.forward(x_train[idx], noise_rng, train=True)
            loss, grad = nn.cross_entropy_batch(logits, y_train[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became non-finite at epoch {epoch}, batch {start // cfg.batch_size}")
            model.zero_grads()
            model.backward(grad)
            opt.step(model.params(), model.grads())
            model.project_head()
            total_loss += loss * len(idx)
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


def train(model, train_set, cfg, rng, test_set=None, n_threads=1):
    """Minibatch-train a network or an ensemble; returns the history.

    Ensemble members train independently on the same data, each on its own
    child RNG stream, so the result is bit-identical for any thread count.
    """
    if isinstance(model, EnsembleModel):
        member_rngs = rng.spawn(len(model.members))
        jobs = list(zip(model.members, member_rngs))
        if n_threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                histories = list(pool.map(
                    lambda job: _train_single(job[0], train_set, cfg, job[1], test_set), jobs))
        else:
            histories = [_train_single(m, train_set, cfg, r, test_set) for m, r in jobs]
        final_rng = rng.spawn(1)[0]
        history = {"members": histories}
        history["train_acc"] = evaluate_accuracy(model, train_set[0], train_set[1], final_rng)
        if test_set is not None:
            history["test_acc"] = evaluate_accuracy(model, test_set[0], test_set[1], final_rng)
            history["gap"] = history["train_acc"] - history["test_acc"]
        return history
    return _train_single(model, train_set, cfg, rng, test_set)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
# A checkpoint is a .npz archive: one JSON metadata entry under "__meta__"
# (architecture, noise config, master seed) plus one named float64 array per
# parameter / running statistic. See README for the exact key layout.

CHECKPOINT_FORMAT = "respriv-checkpoint-1"


def _net_arrays(net, prefix=""):
    arrays = {}
    for i, b in enumerate(net.blocks):
        base = f"{prefix}block{i:02d}."
        if b.linear.kind == "dense":
            arrays[base + "weight"] = b.linear.weight
        else:
            arrays[base + "first_row"] = b.linear.first_row
        arrays[base + "bn_gamma"] = b.bn.gamma
        arrays[base + "bn_beta"] = b.bn.beta
        arrays[base + "bn_running_mean"] = b.bn.running_mean
        arrays[base + "bn_running_var"] = b.bn.running_var
    arrays[prefix + "head_weight"] = net.head.weight
    return arrays


def _net_meta(net):
    return {
        "n_blocks": net.n_blocks,
        "input_dim": net.input_dim,
        "n_classes": net.n_classes,
        "block_kind": net.blocks[0].linear.kind,
        "activation": net.blocks[0].act.name,
        "noise": net.noise.to_dict(),
        "skip_connections": net.skip_connections,
        "head_norm_bound": net.head_norm_bound,
    }


def save_checkpoint(model, path, master_seed=None):
    meta = {"format": CHECKPOINT_FORMAT, "master_seed": master_seed}
    arrays = {}
    if isinstance(model, EnsembleModel):
        meta["kind"] = "ensemble"
        meta["k"] = model.k
        meta["net"] = _net_meta(model.members[0])
        for j, member in enumerate(model.members):
            arrays.update(_net_arrays(member, prefix=f"member{j:02d}."))
    else:
        meta["kind"] = "residual_net"
        meta["net"] = _net_meta(model)
        arrays.update(_net_arrays(model))
    np.savez(path, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def _rebuild_net(meta, arrays, prefix=""):
    blocks = []
    for i in range(meta["n_blocks"]):
        base = f"{prefix}block{i:02d}."
        if meta["block_kind"] == "dense":
            linear = nn.Dense(arrays[base + "weight"])
        else:
            linear = nn.Circulant(arrays[base + "first_row"])
        bn = nn.BatchNorm(meta["input_dim"])
        bn.gamma = arrays[base + "bn_gamma"].copy()
        bn.beta = arrays[base + "bn_beta"].copy()
        bn.running_mean = arrays[base + "bn_running_mean"].copy()
        bn.running_var = arrays[base + "bn_running_var"].copy()
        blocks.append(ResidualBlock(linear, nn.Activation(meta["activation"]), bn))
    head = nn.Dense(arrays[prefix + "head_weight"])
    return ResidualNet(blocks, head, NoiseConfig.from_dict(meta["noise"]),
                       meta["skip_connections"], meta["head_norm_bound"])


def load_checkpoint(path):
    """Load a checkpoint; returns (model, metadata dict)."""
    with np.load(path) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a recognized checkpoint: {path}")
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
    if meta["kind"] == "ensemble":
        members = [_rebuild_net(meta["net"], arrays, prefix=f"member{j:02d}.")
                   for j in range(meta["k"])]
        return EnsembleModel(members), meta
    return _rebuild_net(meta["net"], arrays), meta
