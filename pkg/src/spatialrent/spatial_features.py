"""Spatial covariates for tree models.

Four ways to inject location: raw coordinates, a spatial lag of the response,
nearest-observation features (values and distances of the k nearest training
points), and Moran eigenvectors of the doubly centred kernel ``M C M`` with
``C_ij = exp(-d_ij / q)``, ``q`` the longest minimum-spanning-tree edge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import CapacityError, InvalidInputError, SchemaError
from .geom import KNNIndex, as_coords, distance_matrix, kmeans_anchors, mst_max_edge

EXACT_MORAN_CAP = 10_000
MIN_DISTANCE_KM = 1e-9


def add_coordinates(X, coords) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] != X.shape[0]:
        raise SchemaError(f"coords shape {coords.shape} does not match {X.shape[0]} rows")
    return np.hstack([X, coords])


@dataclass(frozen=True)
class SpatialWeights:
    """Row-standardised k-nearest-neighbour weights into a training set."""

    k: int
    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.indices.shape != self.weights.shape:
            raise SchemaError("indices and weights must have the same shape")


def knn_weights(train_coords, k: int, query_coords=None) -> SpatialWeights:
    """Inverse-distance weights over the k nearest training sites, rows summing to 1.

    Without ``query_coords`` each training site is weighted on the others
    (no self-weight). Coincident sites use a distance floor of ``MIN_DISTANCE_KM``.
    """
    index = KNNIndex(train_coords)
    if query_coords is None:
        g = index.query(index.points, k, exclude=np.arange(index.n))
    else:
        g = index.query(query_coords, k)
    w = 1.0 / np.maximum(g.distances, MIN_DISTANCE_KM)
    w /= w.sum(axis=1, keepdims=True)
    return SpatialWeights(int(k), g.indices, w)


def spatial_lag(weights: SpatialWeights, values) -> np.ndarray:
    """``lag_i = sum_j w_ij * values_j`` (values indexed by training row)."""
    v = np.asarray(values, dtype=float)
    if weights.indices.size and (weights.indices.min() < 0 or weights.indices.max() >= v.shape[0]):
        raise SchemaError("spatial weights reference rows outside the value vector")
    return np.einsum("ij,ij...->i...", weights.weights, v[weights.indices])


def rfsi_features(train_coords, train_y, query_coords, k: int, exclude_self: bool = False,
                  index: KNNIndex | None = None) -> np.ndarray:
    """Columns ``(obs_1, dist_1, ..., obs_k, dist_k)`` by ascending distance.

    With ``exclude_self`` the query rows are the training rows themselves and
    each row's own observation is left out.
    """
    index = index or KNNIndex(train_coords)
    y = np.asarray(train_y, dtype=float)
    q = as_coords(query_coords, "query_coords", allow_empty=True)
    if exclude_self:
        if q.shape[0] != index.n:
            raise InvalidInputError("exclude_self requires the queries to be the training sites")
        g = index.query(q, k, exclude=np.arange(index.n))
    else:
        g = index.query(q, k)
    out = np.empty((q.shape[0], 2 * k))
    out[:, 0::2] = y[g.indices]
    out[:, 1::2] = g.distances
    return out


def rfsi_column_names(k):
    names = []
    for j in range(1, k + 1):
        names += [f"obs_{j}", f"dist_{j}"]
    return names


def moran_kernel(coords, q=None, zero_diagonal=True):
    """``C_ij = exp(-d_ij / q)`` with the MST scale ``q`` unless given."""
    c = as_coords(coords)
    q = mst_max_edge(c) if q is None else q
    if not q > 0:
        raise InvalidInputError("kernel scale q must be positive (are all sites identical?)")
    C = np.exp(-distance_matrix(c) / q)
    if zero_diagonal:
        np.fill_diagonal(C, 0.0)
    return C, q


def double_center(C):
    """``M C M`` with ``M = I - 11'/n``."""
    r = C.mean(axis=1, keepdims=True)
    col = C.mean(axis=0, keepdims=True)
    return C - r - col + C.mean()


@dataclass(frozen=True)
class MoranBasis:
    """Moran eigenvectors at the fitting sites plus what is needed to extend them.

    ``eigenvectors`` is n x h (one column per retained pair), ``eigenvalues``
    the matching spectrum, descending. New sites are mapped through the Nyström
    extension on ``anchors``.
    """

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    kernel_scale: float
    anchors: np.ndarray
    anchor_vectors: np.ndarray
    anchor_values: np.ndarray
    anchor_colmeans: np.ndarray
    col_mean: np.ndarray
    col_scale: np.ndarray

    @property
    def h(self):
        return self.eigenvectors.shape[1]

    def _extend(self, coords):
        c = as_coords(coords, allow_empty=True)
        out = np.empty((c.shape[0], self.h))
        step = max(1, 2_000_000 // max(1, self.anchors.shape[0]))
        for s in range(0, c.shape[0], step):
            K = np.exp(-distance_matrix(c[s:s + step], self.anchors) / self.kernel_scale)
            out[s:s + step] = ((K - self.anchor_colmeans) @ self.anchor_vectors) / (self.anchor_values + 1.0)
        return out

    def transform(self, coords) -> np.ndarray:
        """Basis values at arbitrary sites, on the same centring and scale as the fit."""
        return (self._extend(coords) - self.col_mean) / self.col_scale


def _select(vals, vecs, h, positive_only, tol=1e-12):
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    if positive_only:
        keep = vals > tol * max(1.0, float(np.abs(vals).max(initial=0.0)))
        vals, vecs = vals[keep], vecs[:, keep]
    return vals[:h], vecs[:, :h]


def moran_exact(coords, h: int = 200, positive_only: bool = True, cap: int = EXACT_MORAN_CAP) -> MoranBasis:
    """Top-h eigenpairs of the dense ``M C M`` (zero-diagonal ``C``)."""
    c = as_coords(coords)
    n = c.shape[0]
    if n > cap:
        raise CapacityError(f"exact Moran eigenvectors limited to n <= {cap} (got {n}); "
                            "use moran_nystrom for larger sets")
    if not 1 <= h <= n:
        raise CapacityError(f"h={h} must lie in [1, n={n}]")
    C, q = moran_kernel(c)
    MCM = double_center(C)
    MCM = 0.5 * (MCM + MCM.T)
    if h < n and n > 500:
        vals, vecs = scipy.linalg.eigh(MCM, subset_by_index=[n - h, n - 1])
    else:
        vals, vecs = np.linalg.eigh(MCM)
    vals, vecs = _select(vals, vecs, h, positive_only)
    colmeans = (C + np.eye(n)).mean(axis=0)
    return MoranBasis(vecs, vals, q, c, vecs, vals, colmeans, np.zeros(vals.size), np.ones(vals.size))


def moran_nystrom(coords, h: int = 200, seed: int = 0, positive_only: bool = True,
                  anchors=None, q=None) -> MoranBasis:
    """Approximate Moran eigenvectors from ``h`` k-means anchor points.

    The centred anchor kernel gives ``E_h, L_h``; sites are mapped through
    ``[C_nh - 1 1'(C_h + I)/h] E_h (L_h + I)^{-1}``, each column is re-centred
    and scaled to unit norm, and eigenvalues become ``(n/h)(L_h + 1) - 1``.
    """
    c = as_coords(coords)
    n = c.shape[0]
    if anchors is None:
        if not 1 <= h <= n:
            raise CapacityError(f"h={h} must lie in [1, n={n}]")
        anchors = kmeans_anchors(c, h, seed)
    anchors = as_coords(anchors, "anchors")
    ha = anchors.shape[0]
    q = mst_max_edge(c) if q is None else q
    Ch, _ = moran_kernel(anchors, q=q)
    vals, vecs = np.linalg.eigh(0.5 * (double_center(Ch) + double_center(Ch).T))
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    approx = (n / ha) * (vals + 1.0) - 1.0
    # positivity is judged on the rescaled spectrum, which approximates the exact one
    keep = approx > 1e-12 * max(1.0, float(np.abs(approx).max(initial=0.0))) if positive_only else np.ones(ha, bool)
    keep &= np.abs(vals + 1.0) > 1e-12
    vals, vecs, approx = vals[keep][:h], vecs[:, keep][:, :h], approx[keep][:h]
    colmeans = (Ch + np.eye(ha)).mean(axis=0)
    raw = MoranBasis(np.empty((0, vals.size)), approx, q, anchors, vecs, vals, colmeans,
                     np.zeros(vals.size), np.ones(vals.size))._extend(c)
    mean = raw.mean(axis=0)
    scale = np.linalg.norm(raw - mean, axis=0)
    scale[scale == 0] = 1.0
    E = (raw - mean) / scale
    return MoranBasis(E, approx, q, anchors, vecs, vals, colmeans, mean, scale)
