"""Ordinal training objectives with gradients at the logit level.

Every probability-based loss takes an ``(N, J)`` matrix of softmax outputs and
integer labels and returns a :class:`LossResult` whose ``grad`` is the
derivative w.r.t. the *logits* that produced those probabilities (the softmax
Jacobian is applied internally).  All losses are mean-reduced over the batch.

The TDeGPD loss instead consumes an ``(N, 3)`` matrix of raw head outputs that
a softplus link maps to ``(sigma, kappa, xi)``.
"""

import json
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .errors import DomainError
from .extreme_dist import PMF_FLOOR, tdegpd_nll_batch, tdegpd_pmf_batch

#: Offset added after the softplus link so TDeGPD parameters stay off zero.
LINK_OFFSET = 1e-4

#: Cost matrix retained for GWDL, rows = true class, columns = predicted.
DEFAULT_COST_MATRIX = np.array([
    [0.0, 1.0, 2.0, 3.0, 4.0],
    [1.0, 0.0, 0.25, 0.33, 0.5],
    [2.0, 1.25, 0.0, 0.25, 0.33],
    [3.0, 1.5, 1.0, 0.0, 0.33],
    [4.0, 2.0, 1.5, 1.0, 0.0],
])


@dataclass
class LossResult:
    value: float
    grad: np.ndarray
    flags: Dict[str, bool] = field(default_factory=dict)


@dataclass(frozen=True)
class PenaltyMatrix:
    """Ordinal disagreement weights ``omega`` (J x J, zero diagonal)."""

    omega: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        omega = np.array(self.omega, dtype=float)
        if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
            raise DomainError("omega must be square")
        if np.any(omega < 0) or np.any(np.diag(omega) != 0):
            raise DomainError("omega must be nonnegative with zero diagonal")
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)

    @classmethod
    def linear(cls, n_classes):
        i = np.arange(n_classes)
        return cls(np.abs(i[:, None] - i[None, :]) / (n_classes - 1), "linear")

    @classmethod
    def quadratic(cls, n_classes):
        i = np.arange(n_classes)
        return cls((i[:, None] - i[None, :]) ** 2 / (n_classes - 1) ** 2, "quadratic")

    @classmethod
    def of_kind(cls, kind, n_classes):
        if kind == "linear":
            return cls.linear(n_classes)
        if kind == "quadratic":
            return cls.quadratic(n_classes)
        raise DomainError(f"unknown penalty kind {kind!r}")

    def to_json(self):
        return json.dumps(self.omega.tolist())

    @classmethod
    def from_json(cls, text, kind="custom"):
        return cls(np.array(json.loads(text), dtype=float), kind)


@dataclass(frozen=True)
class CostMatrix:
    """GWDL confusion costs ``m`` (rows = true class) and a background class."""

    m: np.ndarray = field(default_factory=lambda: DEFAULT_COST_MATRIX.copy())
    background_class: int = 0

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError("cost matrix must be square")
        if np.any(m < 0) or np.any(np.diag(m) != 0):
            raise DomainError("cost matrix must be nonnegative with zero diagonal")
        if not 0 <= self.background_class < m.shape[0]:
            raise DomainError("background class out of range")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def to_json(self):
        return json.dumps(self.m.tolist())

    @classmethod
    def from_json(cls, text, background_class=0):
        return cls(np.array(json.loads(text), dtype=float), background_class)


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = 1e-8
    mcewk_c: float = 0.7
    penalty_kind: str = "quadratic"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be > 0")
        if not 0.0 <= self.mcewk_c <= 1.0:
            raise DomainError("mcewk_c must lie in [0, 1]")
        if self.penalty_kind not in ("linear", "quadratic"):
            raise DomainError(f"unknown penalty kind {self.penalty_kind!r}")


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DomainError("logits must be finite")
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(probs, grad_probs):
    """Vector-Jacobian product of the row-wise softmax: dL/dz from dL/dp."""
    inner = np.sum(grad_probs * probs, axis=1, keepdims=True)
    return probs * (grad_probs - inner)


def _check(probs, labels):
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise DomainError("probs must be an (N, J) matrix with J >= 2")
    if labels.shape != (probs.shape[0],):
        raise DomainError("labels must have one entry per row of probs")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise DomainError("label out of range")
    return probs, labels.astype(int)


def ce_loss(probs, labels) -> LossResult:
    """Mean cross-entropy ``-log p_{n, y_n}``; gradient ``(p - onehot) / N``."""
    probs, labels = _check(probs, labels)
    n = len(labels)
    p_true = probs[np.arange(n), labels]
    clamped = p_true < PMF_FLOOR
    value = float(np.mean(-np.log(np.maximum(p_true, PMF_FLOOR))))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    # a clamped term is constant in the logits
    grad[clamped] = 0.0
    return LossResult(value, grad / n, {"clamped": bool(clamped.any())})


def _wk_parts(probs, labels, omega, eps):
    n, j = probs.shape
    hb = np.bincount(labels, minlength=j).astype(float)
    w_true = omega[:, labels].T  # w_true[n, i] = omega[i, y_n]
    numer = float(np.sum(w_true * probs))
    ha = probs.sum(axis=0)
    w_hb = omega @ hb
    expected = float(ha @ w_hb) / n
    denom = expected + eps
    grad_p = (w_true * denom - numer * (w_hb / n)[None, :]) / denom ** 2
    return numer / denom, grad_p, expected <= 0.0


def wk_loss(probs, labels, omega: Optional[PenaltyMatrix] = None,
            cfg: Optional[LossConfig] = None) -> LossResult:
    """Weighted-kappa loss: observed over expected ordinal disagreement.

    ``sum(omega * p^T Y) / ((1/N) * sum_ij omega_ij ha_i hb_j + eps)``; zero for
    perfect one-hot predictions and close to one for predictions independent
    of the labels.  ``flags['degenerate']`` marks batches whose expected
    disagreement is zero.
    """
    cfg = cfg or LossConfig()
    probs, labels = _check(probs, labels)
    if omega is None:
        omega = PenaltyMatrix.of_kind(cfg.penalty_kind, probs.shape[1])
    if omega.omega.shape[0] != probs.shape[1]:
        raise DomainError("omega size does not match the number of classes")
    value, grad_p, degenerate = _wk_parts(probs, labels, omega.omega, cfg.epsilon)
    return LossResult(value, softmax_backward(probs, grad_p), {"degenerate": degenerate})


def mce_loss(probs, labels) -> LossResult:
    """Macro-averaged cross-entropy over the classes present in the batch."""
    probs, labels = _check(probs, labels)
    n = len(labels)
    p_true = probs[np.arange(n), labels]
    clamped = p_true < PMF_FLOOR
    nll = -np.log(np.maximum(p_true, PMF_FLOOR))
    counts = np.bincount(labels, minlength=probs.shape[1])
    present = np.flatnonzero(counts)
    per_class = np.bincount(labels, weights=nll, minlength=probs.shape[1])[present] / counts[present]
    value = float(np.mean(per_class))
    # d value / d nll_n = 1 / (n_present * count[y_n])
    coef = 1.0 / (len(present) * counts[labels])
    coef[clamped] = 0.0
    grad = probs * coef[:, None]
    grad[np.arange(n), labels] -= coef
    return LossResult(value, grad, {"clamped": bool(clamped.any())})


def mcewk_loss(probs, labels, cfg: Optional[LossConfig] = None,
               omega: Optional[PenaltyMatrix] = None) -> LossResult:
    """``C * wk_loss + (1 - C) * mce_loss`` with ``C = cfg.mcewk_c``."""
    cfg = cfg or LossConfig()
    c = cfg.mcewk_c
    if c == 1.0:
        return wk_loss(probs, labels, omega, cfg)
    if c == 0.0:
        return mce_loss(probs, labels)
    wk = wk_loss(probs, labels, omega, cfg)
    mce = mce_loss(probs, labels)
    return LossResult(
        c * wk.value + (1 - c) * mce.value,
        c * wk.grad + (1 - c) * mce.grad,
        {**wk.flags, **mce.flags},
    )


def gwdl_loss(probs, labels, m: Optional[CostMatrix] = None,
              epsilon: float = 1e-8) -> LossResult:
    """Generalized Wasserstein Dice loss ``1 - 2TP / (2TP + TotalError + eps)``.

    ``flags['all_background']`` is set when every label is the background
    class; the score then collapses to zero and the loss to one.
    """
    m = m or CostMatrix()
    probs, labels = _check(probs, labels)
    if m.m.shape[0] != probs.shape[1]:
        raise DomainError("cost matrix size does not match the number of classes")
    rows = m.m[labels]  # rows[n, c] = M[y_n, c]
    delta = np.sum(rows * probs, axis=1)
    total_error = float(delta.sum())
    w = rows[:, m.background_class]
    tp = float(np.sum(w * (w - delta)))
    denom = 2 * tp + total_error + epsilon
    value = 1.0 - 2 * tp / denom
    # dTP/dp = -w_n M[y_n, c], dTE/dp = M[y_n, c]
    d_tp = -w[:, None] * rows
    d_te = rows
    grad_p = -(2 * d_tp * denom - 2 * tp * (2 * d_tp + d_te)) / denom ** 2
    flags = {"all_background": bool(np.all(labels == m.background_class))}
    return LossResult(float(value), softmax_backward(probs, grad_p), flags)


def at_bce_loss(probs, labels, weights=None) -> LossResult:
    """All-threshold binary cross-entropy over the ``J - 1`` cumulative tasks.

    Threshold ``k`` has target ``1[y > k]`` and predicted exceedance
    ``sum_{c > k} p_c``.  With ``weights`` the per-sample losses are combined
    by a weighted mean.
    """
    probs, labels = _check(probs, labels)
    n, j = probs.shape
    # exceedance from the right-hand tail avoids 1 - cumsum cancellation
    s_hat = np.cumsum(probs[:, ::-1], axis=1)[:, ::-1][:, 1:]
    s = (labels[:, None] > np.arange(j - 1)[None, :]).astype(float)
    clipped = np.clip(s_hat, PMF_FLOOR, 1 - PMF_FLOOR)
    inside = clipped == s_hat
    per_sample = -np.mean(s * np.log(clipped) + (1 - s) * np.log1p(-clipped), axis=1)
    d_shat = (-s / clipped + (1 - s) / (1 - clipped)) / (j - 1)
    d_shat = np.where(inside, d_shat, 0.0)

    if weights is None:
        agg = np.full(n, 1.0 / n)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,) or np.any(weights < 0) or not weights.sum() > 0:
            raise DomainError("weights must be nonnegative with a positive sum")
        agg = weights / weights.sum()
    value = float(np.sum(agg * per_sample))
    # p_c feeds every exceedance with k < c
    grad_p = np.zeros_like(probs)
    grad_p[:, 1:] = np.cumsum(d_shat, axis=1)
    grad_p *= agg[:, None]
    return LossResult(value, softmax_backward(probs, grad_p), {"clamped": bool((~inside).any())})


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def link_params(raw):
    """Map raw (N, 3) outputs to positive ``(sigma, kappa, xi)`` columns."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[1] != 3:
        raise DomainError("raw parameters must be an (N, 3) matrix")
    if not np.all(np.isfinite(raw)):
        raise DomainError("raw parameters must be finite")
    return softplus(raw) + LINK_OFFSET


def inverse_link(params):
    """Raw values whose link output equals ``params`` (all > LINK_OFFSET)."""
    x = np.asarray(params, dtype=float) - LINK_OFFSET
    return x + np.log(-np.expm1(-x))


def tdegpd_loss(raw_params, labels, y_max=4) -> LossResult:
    """Mean truncated discrete eGPD NLL; gradient w.r.t. the raw head outputs."""
    theta = link_params(raw_params)
    labels = np.asarray(labels).astype(int)
    if labels.shape != (theta.shape[0],):
        raise DomainError("labels must have one entry per row")
    values, grad, clamped = tdegpd_nll_batch(
        theta[:, 0], theta[:, 1], theta[:, 2], labels, y_max
    )
    n = len(labels)
    grad_raw = grad * sigmoid(np.asarray(raw_params, float)) / n
    return LossResult(float(values.mean()), grad_raw, {"clamped": bool(clamped.any())})


def tdegpd_probs(raw_params, y_max=4):
    theta = link_params(raw_params)
    return tdegpd_pmf_batch(theta[:, 0], theta[:, 1], theta[:, 2], y_max)


def predict_class(probs):
    """Row-wise argmax; ties go to the lower class index."""
    return np.argmax(np.asarray(probs), axis=1)


@dataclass(frozen=True)
class Objective:
    """A named loss bound to its head: ``evaluate(outputs, labels)`` and ``probs(outputs)``."""

    name: str
    out_dim: int
    evaluate: Callable
    probs: Callable


def _from_probs(fn):
    def evaluate(logits, labels):
        return fn(softmax(logits), labels)
    return evaluate


def make_objective(name, n_classes=5, cfg: Optional[LossConfig] = None,
                   cost: Optional[CostMatrix] = None) -> Objective:
    """Bind loss ``name`` (one of :data:`LOSS_NAMES`) to its output head."""
    cfg = cfg or LossConfig()
    if name == "ce":
        return Objective(name, n_classes, _from_probs(ce_loss), softmax)
    if name == "wkloss":
        omega = PenaltyMatrix.of_kind(cfg.penalty_kind, n_classes)
        return Objective(name, n_classes, _from_probs(lambda p, y: wk_loss(p, y, omega, cfg)), softmax)
    if name == "mcewk":
        omega = PenaltyMatrix.of_kind(cfg.penalty_kind, n_classes)
        return Objective(name, n_classes, _from_probs(lambda p, y: mcewk_loss(p, y, cfg, omega)), softmax)
    if name == "gwdl":
        cost = cost or CostMatrix()
        return Objective(name, n_classes, _from_probs(lambda p, y: gwdl_loss(p, y, cost, cfg.epsilon)), softmax)
    if name == "atbce":
        return Objective(name, n_classes, _from_probs(at_bce_loss), softmax)
    if name == "tdegpd":
        y_max = n_classes - 1
        return Objective(
            name, 3,
            lambda raw, y: tdegpd_loss(raw, y, y_max),
            lambda raw: tdegpd_probs(raw, y_max),
        )
    raise DomainError(f"unknown loss {name!r}; valid names: {', '.join(LOSS_NAMES)}")


LOSS_NAMES = ("ce", "wkloss", "mcewk", "gwdl", "atbce", "tdegpd")
