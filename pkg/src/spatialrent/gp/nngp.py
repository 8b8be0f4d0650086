"""Conjugate nearest-neighbour Gaussian process regression.

The response model is ``y ~ N(X beta, sigma2 * M)`` with ``M = P + alpha I``,
``P`` the exponential correlation matrix. ``M^{-1}`` is replaced by the sparse
Vecchia factorisation ``(I - A)' D^{-1} (I - A)`` built on an x-coordinate
ordering, where row i of ``A`` regresses site i on its k nearest predecessors.
With ``(alpha, phi)`` fixed, a normal-inverse-gamma prior on ``(beta, sigma2)``
is conjugate and the predictive distribution is Student-t.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import CapacityError, InvalidInputError, InvalidPriorError, NumericalError
from ..geom import KNNIndex, as_coords, prefix_knn
from .covariance import CovarianceSpec

JITTER_LADDER = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
_BATCH = 4096


def xy_ordering(coords) -> np.ndarray:
    """Permutation sorting sites by x, then y, then original index."""
    c = as_coords(coords)
    return np.lexsort((np.arange(c.shape[0]), c[:, 1], c[:, 0]))


def build_neighbor_sets(coords, k: int):
    """Ordering plus, for each ordered position i, its k nearest predecessors.

    Neighbour indices refer to positions in the ordered sequence.
    """
    c = as_coords(coords)
    order = xy_ordering(c)
    sets, _ = prefix_knn(c[order], k)
    return order, sets


def _pad(sets, k):
    n = len(sets)
    nbr = np.full((n, k), -1, dtype=np.int64)
    for i, s in enumerate(sets):
        nbr[i, :s.size] = s
    return nbr


def _conditional_batch(pts_q, pts_nbr, valid, spec: CovarianceSpec):
    """Kriging weights and conditional variances of query sites on neighbour sites.

    ``pts_q`` (r, 2), ``pts_nbr`` (r, k, 2), ``valid`` (r, k). Padded slots get
    an identity block and zero right-hand side, hence zero weight.
    """
    alpha = spec.alpha
    r, k = valid.shape
    dnn = np.sqrt(((pts_nbr[:, :, None, :] - pts_nbr[:, None, :, :]) ** 2).sum(-1))
    M = np.exp(-spec.phi * dnn)
    eye = np.eye(k)
    M += alpha * eye
    vv = valid[:, :, None] & valid[:, None, :]
    M = np.where(vv, M, eye)
    d0 = np.sqrt(((pts_nbr - pts_q[:, None, :]) ** 2).sum(-1))
    rhs = np.where(valid, np.exp(-spec.phi * d0), 0.0)
    try:
        np.linalg.cholesky(M)
        a = np.linalg.solve(M, rhs[:, :, None])[:, :, 0]
        d = (1.0 + alpha) - np.einsum("ij,ij->i", rhs, a)
        bad = ~(np.isfinite(d) & (d > 0))
    except np.linalg.LinAlgError:
        a = np.zeros((r, k))
        d = np.zeros(r)
        bad = np.ones(r, dtype=bool)
    for i in np.nonzero(bad)[0]:
        a[i], d[i] = _conditional_row(M[i], rhs[i], alpha, valid[i].any())
    return a, d


def _conditional_row(M, rhs, alpha, has_neighbors):
    if not has_neighbors:
        return np.zeros_like(rhs), 1.0 + alpha
    k = M.shape[0]
    for jitter in (0.0,) + JITTER_LADDER:
        try:
            L = np.linalg.cholesky(M + jitter * np.eye(k))
        except np.linalg.LinAlgError:
            continue
        z = np.linalg.solve(L, rhs)
        a = np.linalg.solve(L.T, z)
        d = (1.0 + alpha + jitter) - rhs @ a
        if np.isfinite(d) and d > 0:
            return a, d
    raise NumericalError("neighbour covariance block is singular beyond the jitter ladder")


@numba.njit(cache=True)
def _forward_sample(nbr, a, d, z):
    n, k = nbr.shape
    w = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(k):
            if nbr[i, j] >= 0:
                s += a[i, j] * w[nbr[i, j]]
        w[i] = s + np.sqrt(d[i]) * z[i]
    return w


@dataclass(frozen=True)
class VecchiaFactors:
    """Sparse factors of the approximate precision ``(I - A)' D^{-1} (I - A)``.

    Rows are in ``ordering`` order; ``neighbors`` is padded with -1 and
    ``a_rows`` with zeros.
    """

    ordering: np.ndarray
    neighbors: np.ndarray
    a_rows: np.ndarray
    d_diag: np.ndarray
    spec: CovarianceSpec

    @property
    def n(self):
        return self.d_diag.shape[0]

    @property
    def neighbor_sets(self):
        return [row[row >= 0] for row in self.neighbors]

    def residual(self, v):
        """``(I - A) v`` for ordered values ``v`` (vector or matrix with rows = sites)."""
        v = np.asarray(v, dtype=float)
        idx = np.where(self.neighbors >= 0, self.neighbors, 0)
        if v.ndim == 1:
            return v - np.einsum("ij,ij->i", self.a_rows, v[idx])
        return v - np.einsum("ij,ijk->ik", self.a_rows, v[idx])

    def whiten(self, v):
        """``D^{-1/2} (I - A) v``; rows become independent with unit variance."""
        r = self.residual(v)
        s = np.sqrt(self.d_diag)
        return r / s if r.ndim == 1 else r / s[:, None]

    def quad_form(self, v):
        w = self.whiten(v)
        return float(w @ w)

    def logdet(self):
        """log det of the approximated ``M``."""
        return float(np.log(self.d_diag).sum())

    def precision(self):
        """Dense ``(I - A)' D^{-1} (I - A)`` in ordered coordinates (testing aid)."""
        n = self.n
        IA = np.eye(n)
        for i in range(n):
            m = self.neighbors[i] >= 0
            IA[i, self.neighbors[i][m]] -= self.a_rows[i][m]
        return IA.T @ (IA / self.d_diag[:, None])

    def sample(self, z):
        """Draw from ``N(0, M~)`` in ordered coordinates given standard normals ``z``."""
        z = np.asarray(z, dtype=float)
        return _forward_sample(self.neighbors, self.a_rows, self.d_diag, z)


def vecchia_factors(coords_ordered, neighbor_sets, spec: CovarianceSpec, ordering=None) -> VecchiaFactors:
    """Nearest-neighbour factors for the unit-sill matrix ``M = P + alpha I``.

    Row i: ``a_i = M[N,N]^{-1} M[N,i]`` and ``d_i = M[i,i] - M[i,N] a_i``.
    """
    pts = as_coords(coords_ordered)
    n = pts.shape[0]
    if len(neighbor_sets) != n:
        raise InvalidInputError("one neighbour set per site is required")
    k = max([len(s) for s in neighbor_sets] + [1])
    nbr = _pad(neighbor_sets, k)
    for i in range(n):
        row = nbr[i][nbr[i] >= 0]
        if row.size and row.max() >= i:
            raise InvalidInputError(f"neighbour set of row {i} references a later row")
    a = np.zeros((n, k))
    d = np.empty(n)
    for s in range(0, n, _BATCH):
        e = min(n, s + _BATCH)
        valid = nbr[s:e] >= 0
        pn = pts[np.where(valid, nbr[s:e], 0)]
        a[s:e], d[s:e] = _conditional_batch(pts[s:e], pn, valid, spec)
    if ordering is None:
        ordering = np.arange(n)
    return VecchiaFactors(np.asarray(ordering), nbr, a, d, spec)


@dataclass(frozen=True)
class NIGPrior:
    """``beta | sigma2 ~ N(mu, sigma2 V)``, ``sigma2 ~ IG(a, b)``."""

    mu: np.ndarray
    V: np.ndarray
    a: float = 2.0
    b: float = 1.0

    @classmethod
    def vague(cls, p, scale=1e6, a=2.0, b=1.0):
        return cls(np.zeros(p), scale * np.eye(p), a, b)

    def precision(self):
        V = np.asarray(self.V, dtype=float)
        if V.shape[0] != V.shape[1] or not np.allclose(V, V.T):
            raise InvalidPriorError("prior V_beta must be symmetric")
        try:
            L = np.linalg.cholesky(V)
        except np.linalg.LinAlgError:
            raise InvalidPriorError("prior V_beta is not positive definite") from None
        if not (self.a > 0 and self.b > 0):
            raise InvalidPriorError("prior shape and scale must be positive")
        Li = np.linalg.inv(L)
        return Li.T @ Li


@dataclass(frozen=True)
class NIGPosterior:
    mu_beta: np.ndarray
    V_beta: np.ndarray
    a_post: float
    b_post: float


def nig_update(Xw, yw, prior: NIGPrior) -> NIGPosterior:
    """Conjugate update for ``yw ~ N(Xw beta, sigma2 I)``."""
    Xw = np.asarray(Xw, dtype=float)
    yw = np.asarray(yw, dtype=float)
    n, p = Xw.shape
    mu0 = np.asarray(prior.mu, dtype=float)
    if mu0.shape != (p,):
        raise InvalidPriorError(f"prior mean has shape {mu0.shape}, expected ({p},)")
    P0 = prior.precision()
    prec = P0 + Xw.T @ Xw
    L = np.linalg.cholesky(prec)
    Li = np.linalg.inv(L)
    V = Li.T @ Li
    mu = V @ (P0 @ mu0 + Xw.T @ yw)
    r = yw - Xw @ mu
    dm = mu - mu0
    b = prior.b + 0.5 * (r @ r + dm @ P0 @ dm)
    return NIGPosterior(mu, 0.5 * (V + V.T), prior.a + 0.5 * n, float(b))


def conjugate_nngp_fit(X, y, factors: VecchiaFactors, prior: NIGPrior | None = None) -> NIGPosterior:
    """Posterior of ``(beta, sigma2)`` given factors built for fixed ``(alpha, phi)``.

    ``X`` and ``y`` are in original row order; they are permuted into the
    factor ordering and whitened before the conjugate update.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != factors.n or y.shape[0] != factors.n:
        raise InvalidInputError("data rows do not match the factors")
    if prior is None:
        prior = NIGPrior.vague(X.shape[1])
    o = factors.ordering
    return nig_update(factors.whiten(X[o]), factors.whiten(y[o]), prior)


@dataclass(frozen=True)
class PredictiveT:
    """Student-t predictive: location ``mean``, squared scale ``scale2``, ``dof``."""

    mean: np.ndarray
    scale2: np.ndarray
    dof: float

    @property
    def variance(self):
        if self.dof <= 2:
            return np.full_like(self.scale2, np.inf)
        return self.scale2 * self.dof / (self.dof - 2.0)


def conjugate_nngp_predict(posterior: NIGPosterior, X, y, coords, X0, coords0,
                           spec: CovarianceSpec, k: int, index: KNNIndex | None = None) -> PredictiveT:
    """t predictive at new sites, each conditioned on its k nearest training sites.

    ``y0 | beta, sigma2 ~ N(x0'beta + a0'(y_N - X_N beta), sigma2 d0)`` with
    ``a0, d0`` the nearest-neighbour kriging weights and conditional variance.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    pts = as_coords(coords)
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    q = as_coords(coords0, "coords0", allow_empty=True)
    if X0.shape[0] != q.shape[0]:
        raise InvalidInputError("X0 and coords0 row counts differ")
    n = pts.shape[0]
    if k > n:
        raise CapacityError(f"k={k} exceeds the training size {n}")
    index = index or KNNIndex(pts)
    m = q.shape[0]
    mean = np.empty(m)
    scale2 = np.empty(m)
    ratio = posterior.b_post / posterior.a_post
    for s in range(0, m, _BATCH):
        e = min(m, s + _BATCH)
        g = index.query(q[s:e], k)
        valid = np.ones_like(g.indices, dtype=bool)
        a0, d0 = _conditional_batch(q[s:e], pts[g.indices], valid, spec)
        xt = X0[s:e] - np.einsum("ij,ijk->ik", a0, X[g.indices])
        mean[s:e] = xt @ posterior.mu_beta + np.einsum("ij,ij->i", a0, y[g.indices])
        scale2[s:e] = ratio * (np.maximum(d0, 0.0) + np.einsum("ij,jk,ik->i", xt, posterior.V_beta, xt))
    return PredictiveT(mean, scale2, 2.0 * posterior.a_post)


def add_intercept(X):
    X = np.asarray(X, dtype=float)
    return np.column_stack([np.ones(X.shape[0]), X])


class ConjugateNNGP:
    """Fit/predict wrapper with an automatic intercept column.

    ``alpha`` and ``phi`` are held fixed; tune them with ``grid_search_alpha_phi``.
    """

    def __init__(self, alpha=0.5, phi=0.1, k=30, prior=None, intercept=True):
        self.alpha = alpha
        self.phi = phi
        self.k = k
        self.prior = prior
        self.intercept = intercept

    @property
    def spec(self):
        return CovarianceSpec.from_alpha(self.alpha, self.phi)

    def _design(self, X):
        return add_intercept(X) if self.intercept else np.asarray(X, dtype=float)

    def fit(self, X, y, coords, neighbor_sets=None):
        Xd = self._design(X)
        self.coords_ = as_coords(coords)
        self.y_ = np.asarray(y, dtype=float)
        self.X_ = Xd
        if neighbor_sets is None:
            neighbor_sets = build_neighbor_sets(self.coords_, self.k)
        order, sets = neighbor_sets
        self.factors_ = vecchia_factors(self.coords_[order], sets, self.spec, ordering=order)
        self.posterior_ = conjugate_nngp_fit(Xd, self.y_, self.factors_, self.prior)
        self.index_ = KNNIndex(self.coords_)
        return self

    def predict_t(self, X0, coords0, k=None) -> PredictiveT:
        k = min(self.k if k is None else k, self.coords_.shape[0])
        return conjugate_nngp_predict(self.posterior_, self.X_, self.y_, self.coords_,
                                      self._design(X0), coords0, self.spec, k, self.index_)

    def predict(self, X0, coords0):
        return self.predict_t(X0, coords0).mean
