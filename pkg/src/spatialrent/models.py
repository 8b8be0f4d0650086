"""Model registry shared by the benchmark: the linear and GP baselines, the
forest variants that inject location in different ways, boosting and the MLP.

Every model exposes ``fit(X, y, coords)`` and ``predict(X0, coords0)``.
Spatial features are rebuilt inside ``fit`` from the rows it is given, so a
model used under cross-validation never sees the held-out fold.
"""
from __future__ import annotations

from dataclasses import asdict, replace

import numpy as np

from .errors import CapacityError, ConfigError, InvalidInputError
from .geom import KNNIndex
from .gp import ConjugateNNGP, OLSRegressor
from .mlp import MLPRegressor, TrainConfig
from .spatial_features import (EXACT_MORAN_CAP, add_coordinates, knn_weights, moran_exact,
                               moran_nystrom, rfsi_features, spatial_lag)
from .trees import BoostConfig, ForestConfig, GBTRegressor, fit_random_forest, predict_forest

RF_VARIANTS = {
    "rf_non_spatial": "non_spatial",
    "rf_coordinates": "coordinates",
    "rf_sar": "sar",
    "rf_sar_coordinates": "sar_coordinates",
    "rf_si": "si",
    "rf_esf": "esf",
    "rf_esf_app": "esf_app",
}
MODEL_NAMES = ("ols", "nngp", *RF_VARIANTS, "gbt", "mlp")
NEIGHBOR_VARIANTS = ("sar", "sar_coordinates", "si")


def check_model_names(names):
    bad = [m for m in names if m not in MODEL_NAMES]
    if bad:
        raise ConfigError(f"unknown model(s) {bad}; valid names: {', '.join(MODEL_NAMES)}")
    return list(names)


def check_capacity(name, n_train):
    if name == "rf_esf" and n_train > EXACT_MORAN_CAP:
        raise CapacityError(f"rf_esf needs an exact eigendecomposition, limited to n <= {EXACT_MORAN_CAP} "
                            f"training rows (got {n_train}); use rf_esf_app")


class SpatialForest:
    """Random forest on the covariates plus one family of spatial features.

    Variants: ``non_spatial``, ``coordinates``, ``sar`` (spatial lag of y),
    ``sar_coordinates``, ``si`` (nearest observations and distances),
    ``esf`` (exact Moran eigenvectors) and ``esf_app`` (Nyström eigenvectors).
    """

    VARIANTS = tuple(RF_VARIANTS.values())

    def __init__(self, variant="coordinates", config: ForestConfig | None = None, k=10, h=200,
                 seed=0, lagged_x=False, mtry=None, mtry_frac=None, n_jobs=1):
        if variant not in self.VARIANTS:
            raise ConfigError(f"unknown forest variant {variant!r}; valid: {self.VARIANTS}")
        self.variant = variant
        self.config = config or ForestConfig()
        if mtry is not None:
            self.config = replace(self.config, mtry=int(mtry))
        self.mtry_frac = mtry_frac
        self.k = int(k)
        self.h = int(h)
        self.seed = seed
        self.lagged_x = lagged_x
        self.n_jobs = n_jobs

    def _design(self, X, coords, train):
        v = self.variant
        parts = [X]
        if v in ("coordinates", "sar_coordinates"):
            parts = [add_coordinates(X, coords)]
        if v in ("sar", "sar_coordinates"):
            w = self.weights_train_ if train else knn_weights(self.coords_, self.k, coords)
            parts.append(spatial_lag(w, self.y_)[:, None])
            if self.lagged_x:
                parts.append(spatial_lag(w, self.X_))
        elif v == "si":
            q = self.coords_ if train else coords
            parts.append(rfsi_features(self.coords_, self.y_, q, self.k, exclude_self=train, index=self.index_))
        elif v in ("esf", "esf_app"):
            parts.append(self.basis_.eigenvectors if train else self.basis_.transform(coords))
        return np.hstack(parts)

    def fit(self, X, y, coords):
        self.X_ = np.asarray(X, dtype=float)
        self.y_ = np.asarray(y, dtype=float)
        self.coords_ = np.asarray(coords, dtype=float)
        n = self.X_.shape[0]
        if self.variant in ("sar", "sar_coordinates"):
            self.weights_train_ = knn_weights(self.coords_, self.k)
        elif self.variant == "si":
            self.index_ = KNNIndex(self.coords_)
        elif self.variant == "esf":
            check_capacity("rf_esf", n)
            self.basis_ = moran_exact(self.coords_, min(self.h, n))
        elif self.variant == "esf_app":
            self.basis_ = moran_nystrom(self.coords_, min(self.h, n), seed=self.seed)
        F = self._design(self.X_, self.coords_, train=True)
        cfg = self.config
        if self.mtry_frac is not None:
            cfg = replace(cfg, mtry=max(1, int(np.floor(self.mtry_frac * F.shape[1] + 0.5))))
        if cfg.mtry is not None and cfg.mtry > F.shape[1]:
            cfg = replace(cfg, mtry=F.shape[1])
        self.n_features_ = F.shape[1]
        self.model_ = fit_random_forest(F, self.y_, cfg, n_jobs=self.n_jobs)
        return self

    def predict(self, X0, coords0):
        F = self._design(np.asarray(X0, dtype=float), np.asarray(coords0, dtype=float), train=False)
        return predict_forest(self.model_, F)


class NNGPRegressor(ConjugateNNGP):
    """Conjugate NNGP over informative covariate columns only."""

    def fit(self, X, y, coords, neighbor_sets=None):
        X = np.asarray(X, dtype=float)
        self.keep_ = np.nonzero(np.ptp(X, axis=0) > 0)[0] if X.shape[0] else np.arange(X.shape[1])
        return super().fit(X[:, self.keep_], y, coords, neighbor_sets)

    def predict_t(self, X0, coords0, k=None):
        return super().predict_t(np.asarray(X0, dtype=float)[:, self.keep_], coords0, k)


def make_model(name, params=None, seed=0):
    """Fresh model ``name`` with fixed hyperparameters ``params``."""
    check_model_names([name])
    p = dict(params or {})
    if name == "ols":
        return OLSRegressor()
    if name == "nngp":
        return NNGPRegressor(alpha=p.get("alpha", 0.5), phi=p.get("phi", 0.1), k=int(p.get("k", 30)))
    if name in RF_VARIANTS:
        forest = {key: p[key] for key in ("n_trees", "node_size", "mtry", "bootstrap") if key in p}
        cfg = ForestConfig(seed=seed, **forest)
        return SpatialForest(RF_VARIANTS[name], cfg, k=p.get("k", 10), h=p.get("h", 200), seed=seed,
                             mtry_frac=p.get("mtry_frac"),
                             lagged_x=bool(p.get("lagged_x", False)), n_jobs=int(p.get("n_jobs", 1)))
    if name == "gbt":
        known = set(asdict(BoostConfig()))
        cell = {("reg_lambda" if k == "lambda" else k): v for k, v in p.items()}
        unknown = set(cell) - known
        if unknown:
            raise InvalidInputError(f"unknown boosting hyperparameters: {sorted(unknown)}")
        return GBTRegressor(BoostConfig(**{"seed": seed, **cell}))
    hidden = tuple(p.get("hidden", (64, 64)))
    train_keys = set(asdict(TrainConfig())) - {"seed"}
    cfg = TrainConfig(seed=seed, **{k: v for k, v in p.items() if k in train_keys})
    return MLPRegressor(hidden, cfg, seed=seed)
