"""Second-order gradient-boosted regression trees.

Squared-error loss is taken as ``0.5 * (y - yhat)^2`` so that the gradient is
``yhat - y`` and the hessian is 1; ``min_child_weight`` is then a minimum
child sample count.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidInputError
from .cart import PresortedData, Tree, check_features, grow
from .forest import tree_seed


@dataclass(frozen=True)
class BoostConfig:
    nround: int = 100
    eta: float = 0.3
    max_depth: int = 6
    gamma: float = 0.0
    reg_lambda: float = 1.0
    colsample_bytree: float = 1.0
    min_child_weight: float = 1.0
    subsample: float = 1.0
    seed: int = 0

    def validate(self):
        if self.nround < 1:
            raise InvalidInputError("nround must be >= 1")
        if not 0 <= self.eta <= 1:
            raise InvalidInputError("eta must lie in [0, 1]")
        if not (0 < self.subsample <= 1 and 0 < self.colsample_bytree <= 1):
            raise InvalidInputError("subsample and colsample_bytree must lie in (0, 1]")
        if self.gamma < 0 or self.reg_lambda < 0:
            raise InvalidInputError("gamma and lambda must be non-negative")


@dataclass(frozen=True)
class BoostModel:
    base_score: float
    trees: tuple
    config: BoostConfig
    n_features: int
    train_mse: tuple = ()

    def to_dict(self):
        return {"kind": "gbt", "config": asdict(self.config), "n_features": self.n_features,
                "base_score": self.base_score, "trees": [t.to_dict() for t in self.trees]}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        p = d["n_features"]
        return cls(float(d["base_score"]), tuple(Tree.from_dict(t, p) for t in d["trees"]),
                   BoostConfig(**d["config"]), p)


def fit_gbt(X, y, config: BoostConfig | None = None, **overrides) -> BoostModel:
    """Boosting with base score ``mean(y)`` and ``yhat += eta * tree(x)`` per round.

    Each round draws a row subsample (without replacement) and a feature
    subset from streams seeded by ``(seed, round)``.
    """
    cfg = config or BoostConfig()
    if overrides:
        cfg = BoostConfig(**{**asdict(cfg), **overrides})
    cfg.validate()
    data = X if isinstance(X, PresortedData) else PresortedData(X)
    y = np.asarray(y, dtype=np.float64)
    n, p = data.shape
    if y.shape != (n,):
        raise InvalidInputError("y length does not match X")
    base = float(np.mean(y))
    yhat = np.full(n, base)
    n_rows = min(n, max(1, int(np.floor(cfg.subsample * n + 0.5))))
    n_cols = min(p, max(1, int(np.floor(cfg.colsample_bytree * p + 0.5))))
    trees = []
    mse = [float(np.mean((y - yhat) ** 2))]
    for t in range(cfg.nround):
        seed = tree_seed(cfg.seed, t)
        rng = np.random.default_rng(seed)
        if n_rows < n:
            in_sample = np.zeros(n, dtype=bool)
            in_sample[rng.choice(n, size=n_rows, replace=False)] = True
        else:
            in_sample = np.ones(n, dtype=bool)
        pool = np.sort(rng.choice(p, size=n_cols, replace=False)) if n_cols < p else np.arange(p)
        g = np.where(in_sample, yhat - y, 0.0)
        h = in_sample.astype(np.float64)
        tree = grow(data, g, h, in_sample=in_sample, pool=pool, mtry=pool.size,
                    max_depth=cfg.max_depth, min_child=cfg.min_child_weight,
                    lam=cfg.reg_lambda, gamma=cfg.gamma, seed=seed)
        trees.append(tree)
        yhat = yhat + cfg.eta * tree.predict(data.X)
        mse.append(float(np.mean((y - yhat) ** 2)))
    return BoostModel(base, tuple(trees), cfg, p, tuple(mse))


def predict_gbt(model: BoostModel, X0) -> np.ndarray:
    X0 = check_features(X0, model.n_features)
    out = np.full(X0.shape[0], model.base_score)
    for tree in model.trees:
        out = out + model.config.eta * tree.predict(X0)
    return out


class GBTRegressor:
    """Fit/predict wrapper; coordinates are accepted and ignored."""

    def __init__(self, config: BoostConfig | None = None, **overrides):
        cfg = config or BoostConfig()
        self.config = BoostConfig(**{**asdict(cfg), **overrides}) if overrides else cfg

    def fit(self, X, y, coords=None):
        self.model_ = fit_gbt(X, y, self.config)
        return self

    def predict(self, X0, coords0=None):
        return predict_gbt(self.model_, X0)
