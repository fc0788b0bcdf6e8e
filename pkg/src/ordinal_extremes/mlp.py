"""A four-layer perceptron with hand-written backpropagation.

Architecture: ``input -> hidden1 -> hidden2 -> embed`` with ReLU after each
affine map, then a linear output layer.  Weights are stored as
``(fan_in, fan_out)`` matrices so a forward pass is ``x @ W + b``.
"""

import copy
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import ContractViolation, DomainError, NonFiniteGradientError

LAYER_NAMES = ("fc1", "fc2", "fc3", "out")
CHECKPOINT_FORMAT = "ordinal-extremes-mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden1: int = 128
    hidden2: int = 256
    embed: int = 64
    out_dim: int = 5
    seed: int = 0

    def __post_init__(self):
        if min(self.dims) < 1:
            raise DomainError("all layer sizes must be >= 1")

    @property
    def dims(self):
        return (self.input_dim, self.hidden1, self.hidden2, self.embed, self.out_dim)


@dataclass(frozen=True)
class OptimConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 300
    patience: int = 20

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise DomainError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be > 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise DomainError("batch_size, max_epochs and patience must be >= 1")


@dataclass
class MlpState:
    config: MlpConfig
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    moments: dict = field(default_factory=dict)
    version: int = 0

    def named_params(self):
        for name, w, b in zip(LAYER_NAMES, self.weights, self.biases):
            yield f"{name}.weight", w
            yield f"{name}.bias", b

    def copy(self):
        return copy.deepcopy(self)

    def to_dict(self):
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "params": {
                name: {"shape": list(a.shape), "data": a.ravel().tolist()}
                for name, a in self.named_params()
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != CHECKPOINT_FORMAT:
            raise DomainError("not an MLP checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise DomainError(f"unsupported checkpoint version {d.get('version')!r}")
        cfg = MlpConfig(**d["config"])
        params = d["params"]

        def load(key):
            p = params[key]
            return np.array(p["data"], dtype=float).reshape(p["shape"])

        weights = [load(f"{n}.weight") for n in LAYER_NAMES]
        biases = [load(f"{n}.bias") for n in LAYER_NAMES]
        for w, (fi, fo) in zip(weights, zip(cfg.dims[:-1], cfg.dims[1:])):
            if w.shape != (fi, fo):
                raise DomainError("checkpoint shapes disagree with its config")
        return cls(cfg, weights, biases)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class Cache:
    inputs: List[np.ndarray]
    pre: List[np.ndarray]
    version: int


def mlp_init(cfg: MlpConfig) -> MlpState:
    """Glorot-uniform weights from ``cfg.seed``, zero biases."""
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(cfg.dims[:-1], cfg.dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpState(cfg, weights, biases)


def mlp_forward(state: MlpState, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != state.config.input_dim:
        raise DomainError(
            f"expected input of shape (N, {state.config.input_dim}), got {x.shape}"
        )
    inputs, pre = [], []
    h = x
    last = len(state.weights) - 1
    for i, (w, b) in enumerate(zip(state.weights, state.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    return h, Cache(inputs, pre, state.version)


def mlp_predict(state: MlpState, x):
    return mlp_forward(state, x)[0]


def mlp_backward(state: MlpState, cache: Cache, d_out):
    """Reverse-mode gradients ``{"fc1.weight": ..., ...}`` summed over rows.

    ``d_out`` is the loss gradient w.r.t. the outputs; mean reduction is the
    loss's responsibility.  ReLU'(0) is taken as 0.
    """
    if cache.version != state.version:
        raise ContractViolation("forward cache is stale: parameters changed since the forward pass")
    grads = {}
    g = np.asarray(d_out, dtype=float)
    for i in range(len(state.weights) - 1, -1, -1):
        if i != len(state.weights) - 1:
            g = g * (cache.pre[i] > 0)
        name = LAYER_NAMES[i]
        grads[f"{name}.weight"] = cache.inputs[i].T @ g
        grads[f"{name}.bias"] = g.sum(axis=0)
        if i:
            g = g @ state.weights[i].T
    return grads


def optim_step(state: MlpState, grads, cfg: OptimConfig, t: int) -> MlpState:
    """Apply one SGD or Adam update in place; ``t`` is the 1-based step index.

    Raises :class:`NonFiniteGradientError` (and leaves ``state`` untouched) if
    any gradient is not finite.
    """
    for name, _ in state.named_params():
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradientError(f"non-finite gradient in {name}", layer=name.split(".")[0])
    params = dict(state.named_params())
    for name, p in params.items():
        g = grads[name]
        if cfg.kind == "sgd":
            p -= cfg.learning_rate * g
            continue
        m, v = state.moments.get(name, (np.zeros_like(p), np.zeros_like(p)))
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        state.moments[name] = (m, v)
        m_hat = m / (1 - cfg.beta1 ** t)
        v_hat = v / (1 - cfg.beta2 ** t)
        p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    state.version += 1
    return state


@dataclass
class TrainResult:
    state: MlpState
    best_epoch: int
    best_score: Optional[float]
    history: List[float]
    val_history: List[float]


def train_mlp(state: MlpState, x, y, objective, cfg: OptimConfig, seed: int,
              score_fn: Optional[Callable[[MlpState], float]] = None) -> TrainResult:
    """Mini-batch training with optional early stopping.

    ``objective.evaluate(outputs, labels)`` must return a loss result with
    ``value`` and ``grad``.  When ``score_fn`` is given it is evaluated after
    every epoch (higher is better); the best-scoring parameters are returned
    and training stops after ``cfg.patience`` epochs without improvement.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    n = len(y)
    step = 0
    history, val_history = [], []
    best_state, best_score, best_epoch, stale = state.copy(), None, 0, 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            out, cache = mlp_forward(state, x[idx])
            res = objective.evaluate(out, y[idx])
            grads = mlp_backward(state, cache, res.grad)
            step += 1
            optim_step(state, grads, cfg, step)
            total += res.value * len(idx)
        history.append(total / max(n, 1))
        if score_fn is None:
            continue
        score = score_fn(state)
        val_history.append(score)
        if best_score is None or score > best_score:
            best_state, best_score, best_epoch, stale = state.copy(), score, epoch, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if score_fn is None:
        best_state, best_epoch = state, cfg.max_epochs - 1
    return TrainResult(best_state, best_epoch, best_score, history, val_history)
