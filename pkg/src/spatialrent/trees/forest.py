from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidInputError
from .cart import PresortedData, Tree, check_features, grow


def tree_seed(master_seed: int, index: int) -> int:
    """64-bit stream seed for member ``index``, independent of fitting order."""
    return int(np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, int(index)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    node_size: int = 5
    mtry: int | None = None
    seed: int = 0
    bootstrap: bool = True

    def resolved_mtry(self, n_features):
        m = self.mtry if self.mtry is not None else max(1, n_features // 3)
        if not 1 <= m <= n_features:
            raise InvalidInputError(f"mtry={m} outside [1, {n_features}]")
        return int(m)

    def validate(self):
        if self.n_trees < 1:
            raise InvalidInputError("n_trees must be >= 1")
        if self.node_size < 1:
            raise InvalidInputError("node_size must be >= 1")


@dataclass(frozen=True)
class ForestModel:
    trees: tuple
    config: ForestConfig
    n_features: int

    def to_dict(self):
        return {"kind": "random_forest", "config": asdict(self.config), "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees]}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        p = d["n_features"]
        return cls(tuple(Tree.from_dict(t, p) for t in d["trees"]), ForestConfig(**d["config"]), p)


def _fit_member(data: PresortedData, y, cfg: ForestConfig, mtry, index):
    n = data.shape[0]
    seed = tree_seed(cfg.seed, index)
    if cfg.bootstrap:
        rng = np.random.default_rng(seed)
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
    else:
        counts = np.ones(n)
    return grow(data, -y * counts, counts, in_sample=counts > 0, mtry=mtry,
                min_child=float(cfg.node_size), seed=seed)


def fit_random_forest(X, y, config: ForestConfig | None = None, n_jobs: int = 1, **overrides) -> ForestModel:
    """Bagged CART ensemble.

    Each member sees a size-n bootstrap (or the full data) and samples
    ``mtry`` candidate features per split. Member RNG streams derive from
    ``(seed, member index)`` so results do not depend on ``n_jobs``.
    """
    cfg = config or ForestConfig()
    if overrides:
        cfg = ForestConfig(**{**asdict(cfg), **overrides})
    cfg.validate()
    data = X if isinstance(X, PresortedData) else PresortedData(X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (data.shape[0],):
        raise InvalidInputError("y length does not match X")
    mtry = cfg.resolved_mtry(data.shape[1])
    if n_jobs == 1:
        trees = [_fit_member(data, y, cfg, mtry, i) for i in range(cfg.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as ex:
            trees = list(ex.map(lambda i: _fit_member(data, y, cfg, mtry, i), range(cfg.n_trees)))
    return ForestModel(tuple(trees), cfg, data.shape[1])


def tree_predictions(model: ForestModel, X0) -> np.ndarray:
    X0 = check_features(X0, model.n_features)
    return np.array([t.predict(X0) for t in model.trees]).reshape(len(model.trees), X0.shape[0])


def ensemble_mean(per_tree: np.ndarray) -> np.ndarray:
    """Column means of a (trees, rows) matrix, summed in sorted order per row.

    Sorting first makes the result independent of member order.
    """
    per_tree = np.asarray(per_tree, dtype=np.float64)
    if per_tree.shape[1] == 0:
        return np.empty(0)
    return np.sort(per_tree, axis=0).sum(axis=0) / per_tree.shape[0]


def predict_forest(model: ForestModel, X0, chunk: int = 20_000) -> np.ndarray:
    X0 = check_features(X0, model.n_features)
    out = np.empty(X0.shape[0])
    for s in range(0, X0.shape[0], chunk):
        out[s:s + chunk] = ensemble_mean(tree_predictions(model, X0[s:s + chunk]))
    return out


class RandomForestRegressor:
    """Fit/predict wrapper; coordinates are accepted and ignored."""

    def __init__(self, config: ForestConfig | None = None, n_jobs: int = 1, **overrides):
        cfg = config or ForestConfig()
        self.config = ForestConfig(**{**asdict(cfg), **overrides}) if overrides else cfg
        self.n_jobs = n_jobs

    def fit(self, X, y, coords=None):
        self.model_ = fit_random_forest(X, y, self.config, n_jobs=self.n_jobs)
        return self

    def predict(self, X0, coords0=None):
        return predict_forest(self.model_, X0)
