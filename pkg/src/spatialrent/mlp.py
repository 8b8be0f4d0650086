"""Feed-forward ReLU network for scalar regression, trained by backpropagation.

Layer ``l+1`` computes ``u = W z + b`` and ``z' = relu(u)``; the output layer
is linear. Weights follow the ``W`` of shape ``(m_{l+1}, m_l)`` convention and
batches are rows, so ``U = Z @ W.T + b``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInputError, SchemaError, TrainingError
from .evaluation import kfold

OPTIMIZERS = ("sgd", "rmsprop", "adam")


@dataclass(frozen=True)
class NetworkSpec:
    layer_widths: tuple
    seed: int = 0

    def __post_init__(self):
        w = tuple(int(x) for x in self.layer_widths)
        object.__setattr__(self, "layer_widths", w)
        if len(w) < 2:
            raise InvalidInputError("a network needs at least an input and an output layer")
        if w[-1] != 1:
            raise InvalidInputError("output layer must have width 1")
        if min(w) < 1:
            raise InvalidInputError("layer widths must be positive")


@dataclass
class NetworkParams:
    weights: list
    biases: list

    def copy(self):
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self):
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    rho: float = 0.9
    eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise InvalidInputError(f"optimizer must be one of {OPTIMIZERS}")
        if self.learning_rate < 0:
            raise InvalidInputError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")


def init_params(spec: NetworkSpec) -> NetworkParams:
    """He-normal weights, zero biases."""
    rng = np.random.default_rng(spec.seed)
    ws, bs = [], []
    for m_in, m_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        ws.append(rng.normal(0.0, np.sqrt(2.0 / m_in), size=(m_out, m_in)))
        bs.append(np.zeros(m_out))
    return NetworkParams(ws, bs)


def forward(params: NetworkParams, x):
    """Output for a batch ``x`` (rows = samples) plus cached ``(z, u)`` per layer."""
    z = np.asarray(x, dtype=float)
    if z.ndim == 1:
        z = z[None, :]
    if z.shape[1] != params.weights[0].shape[1]:
        raise SchemaError(f"input width {z.shape[1]} != {params.weights[0].shape[1]}")
    zs, us = [z], []
    last = len(params.weights) - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        u = z @ W.T + b
        us.append(u)
        z = u if l == last else np.maximum(u, 0.0)
        zs.append(z)
    return z[:, 0], (zs, us)


def mse_loss(y, yhat) -> float:
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if y.shape != yhat.shape:
        raise SchemaError("y and yhat lengths differ")
    if y.size == 0:
        raise InvalidInputError("empty batch")
    return float(np.mean((y - yhat) ** 2))


def backward(params: NetworkParams, x, y):
    """Loss and exact gradients of the batch MSE (ReLU derivative at 0 taken as 0)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat, (zs, us) = forward(params, x)
    n = y.size
    delta = (2.0 / n) * (yhat - y)[:, None]
    L = len(params.weights)
    gw, gb = [None] * L, [None] * L
    for l in range(L - 1, -1, -1):
        gw[l] = delta.T @ zs[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l]) * (us[l - 1] > 0)
    return mse_loss(y, yhat), NetworkParams(gw, gb)


@dataclass
class TrainResult:
    params: NetworkParams
    loss_trace: list = field(default_factory=list)


def train(spec: NetworkSpec, X, y, config: TrainConfig, params: NetworkParams | None = None) -> TrainResult:
    """Mini-batch training; batch order is reshuffled each epoch from ``config.seed``.

    ``loss_trace`` holds the full-data training MSE after each epoch.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise SchemaError("X and y row counts differ")
    params = (params or init_params(spec)).copy()
    rng = np.random.default_rng(config.seed)
    n = y.size
    lr = config.learning_rate
    state = [[np.zeros_like(a) for a in params.weights + params.biases] for _ in range(2)]
    step = 0
    trace = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(0, n, config.batch_size):
                idx = perm[s:s + config.batch_size]
                _, grads = backward(params, X[idx], y[idx])
                step += 1
                _apply(params, grads, config, state, step, lr)
            loss = mse_loss(y, forward(params, X)[0])
        if not np.isfinite(loss):
            raise TrainingError("training loss became non-finite", epoch)
        trace.append(loss)
    return TrainResult(params, trace)


def _apply(params, grads, cfg, state, step, lr):
    ps = params.weights + params.biases
    gs = grads.weights + grads.biases
    m, v = state
    for i, (p, g) in enumerate(zip(ps, gs)):
        if cfg.optimizer == "sgd":
            p -= lr * g
        elif cfg.optimizer == "rmsprop":
            v[i] = cfg.rho * v[i] + (1 - cfg.rho) * g * g
            p -= lr * g / (np.sqrt(v[i]) + cfg.eps)
        else:
            m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g
            v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g
            mhat = m[i] / (1 - cfg.beta1 ** step)
            vhat = v[i] / (1 - cfg.beta2 ** step)
            p -= lr * mhat / (np.sqrt(vhat) + cfg.eps)


class MLPRegressor:
    """Standardises inputs (and centres/scales the target) on the training rows only."""

    def __init__(self, hidden=(64, 64), config: TrainConfig | None = None, seed=0):
        self.hidden = tuple(hidden)
        self.config = config or TrainConfig()
        self.seed = seed

    def fit(self, X, y, coords=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.x_mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.x_scale_ = np.where(sd > 0, sd, 1.0)
        self.y_mean_ = float(y.mean())
        self.y_scale_ = float(y.std()) or 1.0
        self.spec_ = NetworkSpec((X.shape[1],) + self.hidden + (1,), seed=self.seed)
        res = train(self.spec_, (X - self.x_mean_) / self.x_scale_, (y - self.y_mean_) / self.y_scale_,
                    self.config)
        self.params_ = res.params
        self.loss_trace_ = res.loss_trace
        return self

    def predict(self, X0, coords0=None):
        Z = (np.asarray(X0, dtype=float) - self.x_mean_) / self.x_scale_
        return forward(self.params_, Z)[0] * self.y_scale_ + self.y_mean_


DEFAULT_SPACE = {
    "n_hidden": [1, 2, 3, 4],
    "width": [16, 64, 256],
    "optimizer": ["rmsprop", "adam"],
    "learning_rate": (1e-4, 1e-2),
    "batch_size": [64, 128, 256],
    "epochs": [30],
}


def sample_space(space, rng):
    """One configuration: lists are sampled uniformly, 2-tuples log-uniformly."""
    out = {}
    for key in sorted(space):
        vals = space[key]
        if isinstance(vals, tuple) and len(vals) == 2 and all(isinstance(v, float) for v in vals):
            lo, hi = vals
            out[key] = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        else:
            vals = list(vals)
            out[key] = vals[int(rng.integers(len(vals)))]
    return out


def random_search_tune(space, trials, folds, seed, X, y):
    """Seeded random search minimising mean CV MSE.

    Returns ``(TrainConfig, NetworkSpec, table)`` for the best trial.
    """
    space = DEFAULT_SPACE if space is None else space
    if not space or any(len(v) == 0 for v in space.values()):
        raise InvalidInputError("search space is empty")
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    fold_list = kfold(X.shape[0], folds, seed) if np.isscalar(folds) else list(folds)
    table = []
    for t in range(trials):
        cell = sample_space(space, rng)
        cfg, hidden = _trial_config(cell, seed + t)
        losses = []
        for test in fold_list:
            mask = np.ones(X.shape[0], dtype=bool)
            mask[test] = False
            model = MLPRegressor(hidden, cfg, seed=seed + t).fit(X[mask], y[mask])
            losses.append(mse_loss(y[test], model.predict(X[test])))
        table.append({**cell, "mse": float(np.mean(losses)), "per_fold": losses})
    best = min(range(trials), key=lambda i: (table[i]["mse"], i))
    cfg, hidden = _trial_config({k: v for k, v in table[best].items() if k in space}, seed + best)
    return cfg, NetworkSpec((X.shape[1],) + hidden + (1,), seed=seed + best), table


def _trial_config(cell, seed):
    hidden = (int(cell.get("width", 64)),) * int(cell.get("n_hidden", 2))
    kw = {k: cell[k] for k in ("optimizer", "learning_rate", "batch_size", "epochs") if k in cell}
    return TrainConfig(seed=seed, **kw), hidden


def params_to_dict(params: NetworkParams):
    return {"weights": [w.tolist() for w in params.weights], "biases": [b.tolist() for b in params.biases]}


def spec_to_dict(spec: NetworkSpec):
    return asdict(spec)
