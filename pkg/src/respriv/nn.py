"""Minimal dense numerical core: layers, loss, optimizers, gradient checking.

Everything runs in 64-bit floats on plain numpy arrays (row-major, batch
axis first). Gradients are hand-derived for the fixed layer set; there is
no general autodiff. Layers cache whatever their backward pass needs, so a
layer instance must see backward() called on the same batch as the last
forward().
"""

import numpy as np

BN_VAR_FLOOR = 1e-12  # clamp on batch/running variance, never divide by zero
BN_MOMENTUM = 0.1

__all__ = [
    "circulant_matrix",
    "circulant_matvec",
    "Dense",
    "Circulant",
    "BatchNorm",
    "Activation",
    "softmax",
    "softmax_cross_entropy",
    "cross_entropy_batch",
    "SgdMomentum",
    "Adam",
    "finite_diff_check",
]


# ---------------------------------------------------------------------------
# circulant operations
# ---------------------------------------------------------------------------

def circulant_matrix(first_row):
    """Dense circulant matrix C with C[i, j] = first_row[(j - i) % d].

    Row i is the first row cyclically shifted right by i, so the first row
    of the result equals `first_row` exactly.
    """
    a = np.asarray(first_row, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("first_row must be a nonempty 1-D vector")
    d = a.size
    idx = (np.arange(d)[None, :] - np.arange(d)[:, None]) % d
    return a[idx]


def circulant_matvec(first_row, x):
    """Product C @ x for the circulant C generated by `first_row`.

    Uses the FFT cross-correlation identity instead of materializing C:
    (C x)_i = sum_j a_{(j-i) mod d} x_j.
    """
    a = np.asarray(first_row, dtype=float)
    v = np.asarray(x, dtype=float)
    if a.ndim != 1 or v.ndim != 1:
        raise ValueError("first_row and x must be 1-D vectors")
    if a.size != v.size:
        raise ValueError(f"length mismatch: first_row has {a.size}, x has {v.size}")
    return np.fft.ifft(np.conj(np.fft.fft(a)) * np.fft.fft(v)).real


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class Dense:
    """Affine map x -> x @ W.T (+ b) with W of shape (d_out, d_in)."""

    kind = "dense"

    def __init__(self, weight, bias=None):
        self.weight = np.asarray(weight, dtype=float)
        self.bias = None if bias is None else np.asarray(bias, dtype=float)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = None if self.bias is None else np.zeros_like(self.bias)
        self._x = None

    @classmethod
    def init(cls, d_out, d_in, rng, bias=False):
        bound = 1.0 / np.sqrt(d_in)
        w = rng.uniform(-bound, bound, size=(d_out, d_in))
        b = np.zeros(d_out) if bias else None
        return cls(w, b)

    def forward(self, x, train=True):
        self._x = x
        out = x @ self.weight.T
        if self.bias is not None:
            out = out + self.bias
        return out

    def backward(self, grad_out):
        self.grad_weight += grad_out.T @ self._x
        if self.bias is not None:
            self.grad_bias += grad_out.sum(axis=0)
        return grad_out @ self.weight

    def params(self):
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def grads(self):
        return [self.grad_weight] if self.bias is None else [self.grad_weight, self.grad_bias]


class Circulant:
    """Linear map by the circulant matrix generated from a learned first row.

    Stands in for a convolution: the full d x d operator is determined by d
    parameters and is diagonalized by the discrete Fourier basis.
    """

    kind = "circulant"

    def __init__(self, first_row):
        self.first_row = np.asarray(first_row, dtype=float)
        if self.first_row.ndim != 1:
            raise ValueError("first_row must be 1-D")
        self.grad_first_row = np.zeros_like(self.first_row)
        d = self.first_row.size
        # index (j - i) % d maps matrix entries back to first-row slots
        self._slot = ((np.arange(d)[None, :] - np.arange(d)[:, None]) % d).ravel()
        self._x = None

    @classmethod
    def init(cls, d, rng):
        bound = 1.0 / np.sqrt(d)
        return cls(rng.uniform(-bound, bound, size=d))

    def forward(self, x, train=True):
        self._x = x
        return x @ circulant_matrix(self.first_row).T

    def backward(self, grad_out):
        grad_c = (grad_out.T @ self._x).ravel()
        self.grad_first_row += np.bincount(self._slot, weights=grad_c, minlength=self.first_row.size)
        return grad_out @ circulant_matrix(self.first_row)

    def params(self):
        return [self.first_row]

    def grads(self):
        return [self.grad_first_row]


class BatchNorm:
    """Per-coordinate batch normalization with affine output.

    Train mode normalizes with the current batch's statistics and folds them
    into the running estimates (momentum 0.1); eval mode normalizes with the
    running estimates. Variances are clamped to BN_VAR_FLOOR before the
    square root, so degenerate batches stay finite.
    """

    kind = "batchnorm"

    def __init__(self, d, momentum=BN_MOMENTUM):
        self.gamma = np.ones(d)
        self.beta = np.zeros(d)
        self.running_mean = np.zeros(d)
        self.running_var = np.ones(d)
        self.momentum = momentum
        self.grad_gamma = np.zeros(d)
        self.grad_beta = np.zeros(d)
        self._cache = None

    def forward(self, x, train=True):
        if train:
            mean = x.mean(axis=0)
            var = np.maximum(x.var(axis=0), BN_VAR_FLOOR)
            self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * x.var(axis=0)
        else:
            mean = self.running_mean
            var = np.maximum(self.running_var, BN_VAR_FLOOR)
        inv_std = 1.0 / np.sqrt(var)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, train, x.shape[0])
        return self.gamma * xhat + self.beta

    def backward(self, grad_out):
        xhat, inv_std, train, n = self._cache
        self.grad_gamma += (grad_out * xhat).sum(axis=0)
        self.grad_beta += grad_out.sum(axis=0)
        g = grad_out * self.gamma
        if not train:
            return g * inv_std
        # batch statistics couple the samples
        return (inv_std / n) * (n * g - g.sum(axis=0) - xhat * (g * xhat).sum(axis=0))

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.grad_gamma, self.grad_beta]


class Activation:
    """Elementwise monotone activation (relu, tanh, or identity)."""

    kind = "activation"
    LIPSCHITZ = {"relu": 1.0, "tanh": 1.0, "identity": 1.0}

    def __init__(self, name="relu"):
        if name not in self.LIPSCHITZ:
            raise ValueError(f"unknown activation {name!r}")
        self.name = name
        self.lipschitz = self.LIPSCHITZ[name]
        self._x = None

    def forward(self, x, train=True):
        self._x = x
        if self.name == "relu":
            return np.maximum(x, 0.0)
        if self.name == "tanh":
            return np.tanh(x)
        return x

    def backward(self, grad_out):
        if self.name == "relu":
            return grad_out * (self._x > 0.0)
        if self.name == "tanh":
            return grad_out * (1.0 - np.tanh(self._x) ** 2)
        return grad_out

    def params(self):
        return []

    def grads(self):
        return []


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def softmax(logits):
    """Stable softmax along the last axis; rows sum to 1."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, label):
    """Cross-entropy of a single logit vector against a class index.

    Returns (loss, gradient). loss = -log softmax(logits)[label], computed
    with max subtraction; gradient = softmax(logits) - onehot(label).
    """
    z = np.asarray(logits, dtype=float)
    k = z.shape[-1]
    if k < 2:
        raise ValueError("need at least two classes")
    if not 0 <= label < k:
        raise ValueError(f"label {label} out of range for {k} classes")
    shifted = z - z.max()
    log_norm = np.log(np.exp(shifted).sum())
    loss = log_norm - shifted[label]
    grad = softmax(z)
    grad[label] -= 1.0
    return loss, grad


def cross_entropy_batch(logits, labels):
    """Mean cross-entropy over a batch; gradient is of the mean."""
    z = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = (log_norm - shifted[np.arange(n), labels]).mean()
    grad = softmax(z)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

def _check_grads(grads):
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient; refusing to step")


class SgdMomentum:
    """SGD with classical momentum: v <- mu*v + g, p <- p - lr*v."""

    algorithm = "sgd_momentum"

    def __init__(self, learning_rate, momentum=0.0):
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self.step_count = 0
        self._velocity = None

    def step(self, params, grads):
        _check_grads(grads)
        if self._velocity is None:
            self._velocity = [np.zeros_like(p) for p in params]
        self.step_count += 1
        for p, g, v in zip(params, grads, self._velocity):
            v *= self.momentum
            v += g
            p -= self.learning_rate * v


class Adam:
    algorithm = "adam"

    def __init__(self, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self._m = None
        self._v = None

    def step(self, params, grads):
        _check_grads(grads)
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def make_optimizer(name, learning_rate, momentum=0.9):
    if name == "sgd":
        return SgdMomentum(learning_rate, momentum)
    if name == "adam":
        return Adam(learning_rate)
    raise ValueError(f"unknown optimizer {name!r}")


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_diff_check(loss_and_grads, params, n_probes, rng, step=1e-5):
    """Compare analytic gradients against central finite differences.

    `loss_and_grads()` must be deterministic (freeze any noise by drawing it
    from a fixed-seed generator inside the closure) and return
    (scalar loss, list of gradient arrays aligned with `params`). Probes
    `n_probes` coordinates chosen uniformly over all parameters and returns
    the worst relative error seen.
    """
    _, analytic = loss_and_grads()
    sizes = [p.size for p in params]
    total = int(np.sum(sizes))
    worst = 0.0
    for _ in range(n_probes):
        flat = int(rng.integers(total))
        pi = 0
        while flat >= sizes[pi]:
            flat -= sizes[pi]
            pi += 1
        p = params[pi]
        orig = p.flat[flat]
        p.flat[flat] = orig + step
        lo_hi, _ = loss_and_grads()
        p.flat[flat] = orig - step
        lo_lo, _ = loss_and_grads()
        p.flat[flat] = orig
        numeric = (lo_hi - lo_lo) / (2.0 * step)
        a = analytic[pi].flat[flat]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        worst = max(worst, err)
    return worst
