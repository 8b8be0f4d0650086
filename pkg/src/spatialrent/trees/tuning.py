from __future__ import annotations

from dataclasses import asdict

import numpy as np

from ..errors import InvalidInputError
from ..evaluation import expand_grid, grid_search, kfold
from .boost import BoostConfig, GBTRegressor
from .forest import ForestConfig, RandomForestRegressor

# published calibration grid; gamma fixed at 0 and nround at 100
CALIBRATION_GBT_GRID = {
    "max_depth": [9, 11, 13],
    "eta": [0.1, 0.2],
    "colsample_bytree": [0.8, 1.0],
    "min_child_weight": [0.8, 1.0],
    "subsample": [0.8, 1.0],
}


def _folds(n, folds, seed):
    return kfold(n, folds, seed) if np.isscalar(folds) else list(folds)


def tune_mtry(X, y, folds, mtry_range, config: ForestConfig | None = None, coords=None,
              seed=0, model_factory=None):
    """mtry with the lowest mean fold RMSE; ties go to the smaller value.

    ``model_factory(mtry=m)`` may supply a spatial pipeline that rebuilds its
    features inside each fold; the default is a plain forest.
    """
    values = sorted({int(m) for m in mtry_range})
    if not values:
        raise InvalidInputError("mtry range is empty")
    X = np.asarray(X, dtype=float)
    cfg = config or ForestConfig()
    if model_factory is None:
        p = X.shape[1]
        if values[0] < 1 or values[-1] > p:
            raise InvalidInputError(f"mtry range must lie within [1, {p}]")
        model_factory = lambda mtry: RandomForestRegressor(cfg, mtry=mtry)  # noqa: E731
    coords = np.zeros((X.shape[0], 2)) if coords is None else coords
    best, table = grid_search(model_factory, [{"mtry": m} for m in values], X, y, coords,
                              _folds(X.shape[0], folds, seed), "rmse", tie_key=lambda c: c["mtry"])
    return best["mtry"], table


def tune_gbt(X, y, folds, grid=None, base_config: BoostConfig | None = None, coords=None,
             seed=0, model_factory=None):
    """Cartesian-grid CV search over boosting hyperparameters.

    Returns the winning ``BoostConfig`` and the CV table. Ties go to the cell
    listed first in the expanded grid.
    """
    grid = CALIBRATION_GBT_GRID if grid is None else grid
    cells = [_alias(c) for c in expand_grid(grid)]
    base = base_config or BoostConfig(nround=100, gamma=0.0)
    known = set(asdict(base))
    for c in cells:
        unknown = set(c) - known
        if unknown:
            raise InvalidInputError(f"unknown boosting hyperparameters: {sorted(unknown)}")
    X = np.asarray(X, dtype=float)
    if model_factory is None:
        model_factory = lambda **kw: GBTRegressor(base, **kw)  # noqa: E731
    coords = np.zeros((X.shape[0], 2)) if coords is None else coords
    best, table = grid_search(model_factory, cells, X, y, coords, _folds(X.shape[0], folds, seed), "rmse")
    return BoostConfig(**{**asdict(base), **best}), table


def _alias(cell):
    cell = dict(cell)
    if "lambda" in cell:
        cell["reg_lambda"] = cell.pop("lambda")
    return cell
