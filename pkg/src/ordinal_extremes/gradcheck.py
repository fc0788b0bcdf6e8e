"""Finite-difference verification of the loss and network gradients.

Used by the test-suite and by the ``gradcheck`` command.  The error measure
is ``max|a - b| / max(|a|_inf, |b|_inf)``, i.e. relative to the scale of the
whole gradient so that near-zero components do not dominate.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .losses import LOSS_NAMES, inverse_link, make_objective
from .mlp import MlpConfig, mlp_backward, mlp_forward, mlp_init

FD_STEP = 1e-6
TOLERANCE = 1e-4
TOY_DIMS = dict(input_dim=3, hidden1=4, hidden2=5, embed=3)


def rel_error(analytic, numeric, floor=1e-12):
    a = np.asarray(analytic, dtype=float).ravel()
    b = np.asarray(numeric, dtype=float).ravel()
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), floor)
    return float(np.max(np.abs(a - b)) / scale)


def central_diff(f: Callable[[np.ndarray], float], x, rel=FD_STEP):
    """Central differences of scalar ``f`` with step ``rel * max(1, |x_i|)``."""
    x = np.array(x, dtype=float)
    grad = np.empty_like(x)
    flat, g = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        h = rel * max(1.0, abs(flat[i]))
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        g[i] = (up - down) / (2 * h)
    return grad


def random_batch(rng, loss, n_classes=5, n_max=8):
    """A random (outputs, labels) pair for ``loss`` with 2..n_max rows.

    Labels always contain at least two distinct classes: on a single-class
    batch the weighted-kappa ratio is the constant ``num / (num + eps)`` and
    its ~1e-9 gradient is below finite-difference resolution.
    """
    n = int(rng.integers(2, n_max + 1))
    labels = rng.integers(0, n_classes, size=n)
    while len(np.unique(labels)) < 2:
        labels = rng.integers(0, n_classes, size=n)
    if loss == "tdegpd":
        # link outputs away from the PMF floor
        theta = np.column_stack([
            rng.uniform(0.5, 5.0, n), rng.uniform(0.5, 3.0, n), rng.uniform(0.05, 1.0, n),
        ])
        return inverse_link(theta), labels
    return rng.normal(0.0, 1.5, size=(n, n_classes)), labels


@dataclass
class CheckRow:
    loss: str
    max_error: float
    n_batches: int

    @property
    def passed(self):
        return self.max_error < TOLERANCE


def check_loss(loss, n_batches=100, seed=0, n_classes=5,
               hook: Optional[Callable] = None) -> CheckRow:
    """Loss-only check: analytic logit gradient against central differences."""
    obj = make_objective(loss, n_classes)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_batches):
        out, labels = random_batch(rng, loss, n_classes)
        grad = obj.evaluate(out, labels).grad
        if hook is not None:
            grad = hook(grad)
        fd = central_diff(lambda z: obj.evaluate(z, labels).value, out)
        worst = max(worst, rel_error(grad, fd))
    return CheckRow(loss, worst, n_batches)


def _toy_net(rng, out_dim, n):
    while True:
        cfg = MlpConfig(out_dim=out_dim, seed=int(rng.integers(2**31)), **TOY_DIMS)
        state = mlp_init(cfg)
        for bias in state.biases:
            bias[...] = rng.normal(0.0, 0.5, size=bias.shape)
        x = rng.normal(size=(n, cfg.input_dim))
        out, cache = mlp_forward(state, x)
        if all(np.any(z > 0) for z in cache.pre[:-1]):
            return state, x, out, cache


def check_composite(loss, n_batches=100, seed=0, n_classes=5,
                    hook: Optional[Callable] = None) -> CheckRow:
    """Forward + loss + backward on a toy MLP against central differences.

    Each batch draws a fresh toy network, input and label set.  Biases are
    randomised: with zero biases a row whose first layer is fully inactive
    yields pre-activations of exactly 0 downstream, i.e. sits on the ReLU
    kink where one-sided and central differences disagree.  Networks with
    a hidden layer that is inactive on every row are redrawn: their output
    is constant across rows, which leaves ratio losses such as WKLoss with
    an epsilon-sized gradient below finite-difference resolution.
    """
    obj = make_objective(loss, n_classes)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_batches):
        _, labels = random_batch(rng, loss, n_classes)
        state, x, out, cache = _toy_net(rng, obj.out_dim, len(labels))
        grads = mlp_backward(state, cache, obj.evaluate(out, labels).grad)
        analytic, numeric = [], []
        for name, p in state.named_params():
            def f(v, p=p):
                saved = p.copy()
                p[...] = v
                value = obj.evaluate(mlp_forward(state, x)[0], labels).value
                p[...] = saved
                return value
            g = grads[name]
            if hook is not None:
                g = hook(g)
            analytic.append(g.ravel())
            numeric.append(central_diff(f, p.copy()).ravel())
        worst = max(worst, rel_error(np.concatenate(analytic), np.concatenate(numeric)))
    return CheckRow(loss, worst, n_batches)


def run_gradcheck(losses: Sequence[str] = LOSS_NAMES, n_batches=100, seed=0,
                  hook: Optional[Callable] = None):
    """One row per loss: the worse of the loss-only and composite checks."""
    rows = []
    for i, loss in enumerate(losses):
        a = check_loss(loss, n_batches, seed + i, hook=hook)
        b = check_composite(loss, n_batches, seed + i, hook=hook)
        rows.append(CheckRow(loss, max(a.max_error, b.max_error), n_batches))
    return rows
