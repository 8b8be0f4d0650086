"""Regression trees grown by exact greedy split search.

Trees are stored as flat node arrays; ``to_dict`` gives the nested record
form used for serialisation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, SchemaError
from ._kernels import grow_tree, predict_tree


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    n_features: int

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    @property
    def n_leaves(self):
        return int((self.feature < 0).sum())

    def predict(self, X):
        X = check_features(X, self.n_features)
        return predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    def apply(self, X):
        """Leaf index reached by each row."""
        X = check_features(X, self.n_features)
        out = np.empty(X.shape[0], dtype=np.int64)
        for i in range(X.shape[0]):
            j = 0
            while self.feature[j] >= 0:
                j = self.left[j] if X[i, self.feature[j]] < self.threshold[j] else self.right[j]
            out[i] = j
        return out

    def to_dict(self, node=0):
        """Nested record: ``{"leaf": v}`` or ``{"feature", "threshold", "left", "right"}``."""
        if self.feature[node] < 0:
            return {"leaf": float(self.value[node]), "cover": float(self.cover[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "cover": float(self.cover[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, record, n_features):
        feature, threshold, left, right, value, cover = [], [], [], [], [], []

        def visit(rec):
            j = len(feature)
            for lst in (feature, left, right):
                lst.append(-1)
            threshold.append(0.0)
            value.append(float(rec.get("leaf", 0.0)))
            cover.append(float(rec.get("cover", 0.0)))
            if "leaf" not in rec:
                feature[j] = int(rec["feature"])
                threshold[j] = float(rec["threshold"])
                left[j] = visit(rec["left"])
                right[j] = visit(rec["right"])
            return j

        visit(record)
        return cls(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                   np.array(right, dtype=np.int64), np.array(value), np.array(cover), n_features)


def check_features(X, n_features):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise SchemaError(f"expected a 2-d feature matrix, got shape {X.shape}")
    if X.shape[1] != n_features:
        raise SchemaError(f"model was fit on {n_features} features, got {X.shape[1]}")
    return np.ascontiguousarray(X)


class PresortedData:
    """Feature matrix with per-feature stable sort orders, shared across trees."""

    def __init__(self, X):
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        if X.ndim != 2 or X.shape[0] == 0:
            raise InvalidInputError("need a non-empty 2-d feature matrix")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("features contain non-finite values")
        self.X = X
        order = np.argsort(X, axis=0, kind="stable")
        self.sorted_idx = np.ascontiguousarray(order.T.astype(np.int64))
        self.sorted_vals = np.ascontiguousarray(np.take_along_axis(X, order, axis=0).T)

    @property
    def shape(self):
        return self.X.shape


def grow(data: PresortedData, g, h, in_sample=None, pool=None, mtry=None, max_depth=-1,
         min_child=1.0, lam=0.0, gamma=0.0, seed=0) -> Tree:
    """Grow one tree from per-row gradient ``g`` and hessian ``h`` (both weighted)."""
    n, p = data.shape
    g = np.ascontiguousarray(g, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    if in_sample is None:
        in_sample = np.ones(n, dtype=np.bool_)
    pool = np.arange(p, dtype=np.int64) if pool is None else np.asarray(pool, dtype=np.int64)
    mtry = pool.size if mtry is None else int(mtry)
    if not 1 <= mtry <= pool.size:
        raise InvalidInputError(f"mtry must lie in [1, {pool.size}], got {mtry}")
    arrays = grow_tree(data.X, data.sorted_idx, data.sorted_vals, g, h,
                       np.ascontiguousarray(in_sample, dtype=np.bool_), pool, mtry,
                       int(max_depth), float(min_child), float(lam), float(gamma),
                       np.uint64(seed))
    return Tree(*arrays, n_features=p)


def fit_tree(X, y=None, *, grad=None, hess=None, weights=None, mtry=None, node_size=1,
             max_depth=-1, lam=0.0, gamma=0.0, min_child_weight=None, seed=0) -> Tree:
    """Fit a single regression tree.

    Variance-reduction mode: pass ``y`` (optionally integer ``weights`` such as
    bootstrap counts); leaves hold the node mean and each child keeps at least
    ``node_size`` samples. Second-order mode: pass ``grad``/``hess``; leaves
    hold ``-G/(H + lam)`` and children need hessian sum ``>= min_child_weight``.
    """
    data = X if isinstance(X, PresortedData) else PresortedData(X)
    n = data.shape[0]
    if grad is None:
        if y is None:
            raise InvalidInputError("pass either y or grad/hess")
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (n,):
            raise SchemaError("y length does not match X")
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        g, h = -y * w, w
        min_child = float(node_size)
    else:
        g = np.asarray(grad, dtype=np.float64)
        h = np.ones(n) if hess is None else np.asarray(hess, dtype=np.float64)
        min_child = float(min_child_weight if min_child_weight is not None else 0.0)
    return grow(data, g, h, in_sample=h > 0, mtry=mtry, max_depth=max_depth,
                min_child=min_child, lam=lam, gamma=gamma, seed=seed)
