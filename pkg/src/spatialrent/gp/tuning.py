from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError
from ..evaluation import expand_grid, kfold, rmse
from .nngp import ConjugateNNGP, build_neighbor_sets


def grid_search_alpha_phi(X, y, coords, grid, folds=5, seed=0, k=30, prior=None):
    """Cross-validated choice of the nugget ratio ``alpha`` and decay ``phi``.

    ``grid`` is ``{"alpha": [...], "phi": [...]}`` or a list of cells. Returns
    ``(alpha, phi, table)``; the table holds mean held-out RMSE per cell. Ties
    go to the smaller phi, then the smaller alpha.
    """
    cells = expand_grid(grid)
    for c in cells:
        if set(c) != {"alpha", "phi"}:
            raise InvalidInputError(f"grid cells need exactly alpha and phi, got {sorted(c)}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    coords = np.asarray(coords, dtype=float)
    n = X.shape[0]
    fold_list = kfold(n, folds, seed) if np.isscalar(folds) else list(folds)
    scores = np.zeros((len(cells), len(fold_list)))
    for f, test in enumerate(fold_list):
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        kk = min(k, int(mask.sum()) - 1) if mask.sum() > 1 else 1
        sets = build_neighbor_sets(coords[mask], max(kk, 1))
        for c, cell in enumerate(cells):
            model = ConjugateNNGP(cell["alpha"], cell["phi"], k=max(kk, 1), prior=prior)
            model.fit(X[mask], y[mask], coords[mask], neighbor_sets=sets)
            scores[c, f] = rmse(y[test], model.predict(X[test], coords[test]))
    table = [{"alpha": cell["alpha"], "phi": cell["phi"], "rmse": float(scores[c].mean()),
              "per_fold": scores[c].tolist()} for c, cell in enumerate(cells)]
    best = min(range(len(cells)), key=lambda c: (table[c]["rmse"], cells[c]["phi"], cells[c]["alpha"]))
    return cells[best]["alpha"], cells[best]["phi"], table
