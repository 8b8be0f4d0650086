"""Error measures, price-band breakdowns and k-fold cross-validation."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CoverageError, InvalidInputError, SchemaError


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    rmse: float
    mape_log: float
    mape_real: float
    m: int

    def as_dict(self):
        return asdict(self)


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if y.shape != yhat.shape:
        raise SchemaError(f"length mismatch: {y.size} observations vs {yhat.size} predictions")
    if y.size == 0:
        raise InvalidInputError("no observations to score")
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mape(y, yhat) -> float:
    """Mean absolute percentage error, in percent."""
    y, yhat = _pair(y, yhat)
    if np.any(y == 0):
        raise ZeroDivisionError("MAPE undefined: an observed value is zero")
    return float(100.0 * np.mean(np.abs((y - yhat) / y)))


def metrics(y, yhat, scale: str = "log") -> MetricsReport:
    """MAE, RMSE and MAPE for log-scale targets, plus MAPE after back-transform.

    With ``scale="real"`` only the real-scale MAPE is computed; the other fields
    are NaN because absolute errors on the skewed yen scale are outlier-driven.
    """
    y, yhat = _pair(y, yhat)
    real = mape(np.exp(y), np.exp(yhat))
    if scale == "real":
        return MetricsReport(float("nan"), float("nan"), float("nan"), real, y.size)
    if scale != "log":
        raise InvalidInputError(f"scale must be 'log' or 'real', got {scale!r}")
    return MetricsReport(mae(y, yhat), rmse(y, yhat), mape(y, yhat), real, y.size)


@dataclass(frozen=True)
class BandReport:
    """Per-band MAPE over half-open bands ``[edge_j, edge_{j+1})``.

    The last band also includes its upper edge. Empty bands carry ``None``.
    """

    edges: np.ndarray
    mape: list
    counts: np.ndarray

    def rows(self):
        for j, (m, c) in enumerate(zip(self.mape, self.counts)):
            yield float(self.edges[j]), float(self.edges[j + 1]), m, int(c)


def band_edges(y, n_bands: int = 10) -> np.ndarray:
    """Quantile edges of ``y`` (deciles by default), deduplicated."""
    y = np.asarray(y, dtype=float)
    e = np.unique(np.quantile(y, np.linspace(0, 1, n_bands + 1)))
    if e.size == 1:
        e = np.array([e[0], np.nextafter(e[0], np.inf)])
    return e


def band_mape(y, yhat, edges) -> BandReport:
    y, yhat = _pair(y, yhat)
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise InvalidInputError("band edges must be strictly increasing with at least two values")
    if y.min() < edges[0] or y.max() > edges[-1]:
        raise CoverageError(f"observations span [{y.min()}, {y.max()}], outside edges "
                            f"[{edges[0]}, {edges[-1]}]")
    band = np.searchsorted(edges, y, side="right") - 1
    band[band == edges.size - 1] = edges.size - 2
    out = []
    counts = np.bincount(band, minlength=edges.size - 1)
    for j in range(edges.size - 1):
        sel = band == j
        out.append(mape(y[sel], yhat[sel]) if counts[j] else None)
    return BandReport(edges, out, counts)


def kfold(n: int, K: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of ``range(n)`` into K folds of near-equal size."""
    n, K = int(n), int(K)
    if K < 2:
        raise InvalidInputError("need at least 2 folds")
    if K > n:
        raise InvalidInputError(f"{K} folds requested for {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, K)]


class FoldError(RuntimeError):
    def __init__(self, fold, cause):
        self.fold = fold
        self.cause = cause
        super().__init__(f"fold {fold}: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class CVResult:
    mean: float
    per_fold: list


METRICS = {"rmse": rmse, "mae": mae, "mse": lambda y, p: rmse(y, p) ** 2, "mape": mape}


def cv_score(model_factory, X, y, coords, folds, metric="rmse") -> CVResult:
    """Mean held-out metric over folds.

    ``model_factory()`` returns a fresh object with ``fit(X, y, coords)`` and
    ``predict(X0, coords0)``. Models build any spatial features inside ``fit``
    from the training complement only.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    coords = np.asarray(coords, dtype=float)
    score = METRICS[metric] if isinstance(metric, str) else metric
    n = X.shape[0]
    per_fold = []
    for i, test in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        train = np.nonzero(mask)[0]
        try:
            model = model_factory()
            model.fit(X[train], y[train], coords[train])
            pred = model.predict(X[test], coords[test])
        except Exception as exc:
            raise FoldError(i, exc) from exc
        per_fold.append(float(score(y[test], pred)))
    return CVResult(float(np.mean(per_fold)), per_fold)


def expand_grid(grid) -> list[dict]:
    """Cartesian product of a ``{name: [values]}`` mapping, in sorted key order."""
    if isinstance(grid, dict):
        if not grid or any(len(v) == 0 for v in grid.values()):
            raise InvalidInputError("grid is empty")
        keys = sorted(grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    cells = [dict(c) for c in grid]
    if not cells:
        raise InvalidInputError("grid is empty")
    return cells


def grid_search(make_model, cells, X, y, coords, folds, metric="rmse", tie_key=None):
    """Evaluate every cell by CV; return (best cell, table sorted as evaluated).

    Ties on the score are resolved by ``tie_key(cell)`` (smaller wins), then
    by position in ``cells``.
    """
    if not cells:
        raise InvalidInputError("grid is empty")
    table = []
    for cell in cells:
        res = cv_score(lambda: make_model(**cell), X, y, coords, folds, metric)
        table.append({**cell, "score": res.mean, "per_fold": res.per_fold})
    tie_key = tie_key or (lambda cell: ())
    best = min(range(len(cells)), key=lambda i: (table[i]["score"], tie_key(cells[i]), i))
    return dict(cells[best]), table
