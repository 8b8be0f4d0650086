"""Dense O(n^3) Gaussian-process computations.

These are the exact references the nearest-neighbour approximation is
checked against, and are limited to ``DENSE_CAP`` training sites.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CapacityError, InvalidInputError, NumericalError
from ..geom import as_coords, distance_matrix
from .covariance import CovarianceSpec
from .nngp import JITTER_LADDER, NIGPosterior, NIGPrior, PredictiveT

DENSE_CAP = 2000


def _chol(A):
    n = A.shape[0]
    scale = max(float(np.mean(np.diag(A))), 1e-300)
    for jitter in (0.0,) + JITTER_LADDER:
        try:
            return np.linalg.cholesky(A + jitter * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("covariance matrix is not positive definite within jitter")


def _chol_solve(L, B):
    return np.linalg.solve(L.T, np.linalg.solve(L, B))


@dataclass(frozen=True)
class KrigingResult:
    mean: np.ndarray
    variance: np.ndarray
    beta: np.ndarray
    loglik: float


def exact_gp_loglik_and_predict(X, y, coords, spec: CovarianceSpec, X0, coords0,
                                dense_cap: int = DENSE_CAP) -> KrigingResult:
    """Universal kriging with ``Lambda = sigma2 * P + tau2 * I``.

    Returns the predictive mean and variance of ``y(s0)`` (nugget included),
    the GLS coefficients and the Gaussian log-likelihood at those coefficients.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    c = as_coords(coords)
    n = c.shape[0]
    if n > dense_cap:
        raise CapacityError(f"dense GP limited to {dense_cap} sites, got {n}")
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    c0 = as_coords(coords0, "coords0")
    Lam = spec.covariance(distance_matrix(c)) + spec.tau2 * np.eye(n)
    L = _chol(Lam)
    Li_X = _chol_solve(L, X)
    G = X.T @ Li_X
    beta = np.linalg.solve(G, Li_X.T @ y)
    r = y - X @ beta
    Li_r = _chol_solve(L, r)
    loglik = -0.5 * (2 * np.log(np.diag(L)).sum() + r @ Li_r + n * np.log(2 * np.pi))
    c0n = spec.covariance(distance_matrix(c0, c))
    w = _chol_solve(L, c0n.T)
    mean = X0 @ beta + c0n @ Li_r
    u = X0 - w.T @ X
    var = (spec.sigma2 + spec.tau2 - np.einsum("ij,ji->i", c0n, w)
           + np.einsum("ij,jk,ik->i", u, np.linalg.inv(G), u))
    return KrigingResult(mean, var, beta, float(loglik))


def dense_unit_matrix(coords, spec: CovarianceSpec):
    """``M = P + alpha I`` for a unit-sill process."""
    c = as_coords(coords)
    return np.exp(-spec.phi * distance_matrix(c)) + spec.alpha * np.eye(c.shape[0])


def dense_conjugate_fit(X, y, coords, spec: CovarianceSpec, prior: NIGPrior | None = None) -> NIGPosterior:
    """Normal-inverse-gamma posterior under ``y ~ N(X beta, sigma2 M)`` with dense ``M``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] > DENSE_CAP:
        raise CapacityError(f"dense GP limited to {DENSE_CAP} sites")
    prior = prior or NIGPrior.vague(X.shape[1])
    P0 = prior.precision()
    L = _chol(dense_unit_matrix(coords, spec))
    Mi_X = _chol_solve(L, X)
    prec = P0 + X.T @ Mi_X
    V = np.linalg.inv(prec)
    V = 0.5 * (V + V.T)
    mu = V @ (P0 @ prior.mu + Mi_X.T @ y)
    r = y - X @ mu
    dm = mu - prior.mu
    b = prior.b + 0.5 * (r @ _chol_solve(L, r) + dm @ P0 @ dm)
    return NIGPosterior(mu, V, prior.a + 0.5 * X.shape[0], float(b))


def dense_conjugate_predict(posterior: NIGPosterior, X, y, coords, X0, coords0,
                            spec: CovarianceSpec) -> PredictiveT:
    """Student-t predictive conditioning on every training site."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    c = as_coords(coords)
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    c0 = as_coords(coords0, "coords0")
    if X0.shape[0] != c0.shape[0]:
        raise InvalidInputError("X0 and coords0 row counts differ")
    L = _chol(dense_unit_matrix(c, spec))
    m0 = np.exp(-spec.phi * distance_matrix(c0, c))
    a0 = _chol_solve(L, m0.T).T
    d0 = 1.0 + spec.alpha - np.einsum("ij,ij->i", m0, a0)
    xt = X0 - a0 @ X
    mean = xt @ posterior.mu_beta + a0 @ y
    ratio = posterior.b_post / posterior.a_post
    scale2 = ratio * (np.maximum(d0, 0.0) + np.einsum("ij,jk,ik->i", xt, posterior.V_beta, xt))
    return PredictiveT(mean, scale2, 2.0 * posterior.a_post)
