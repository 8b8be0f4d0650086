from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, SingularDesignError


@dataclass(frozen=True)
class OLSResult:
    beta: np.ndarray
    adj_r2: float
    t_values: np.ndarray
    std_errors: np.ndarray
    sigma2: float
    names: list

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if self.names and self.names[0] == "const":
            X = np.column_stack([np.ones(X.shape[0]), X])
        return X @ self.beta


def dependent_columns(X, tol=None) -> list[int]:
    """Indices of columns that are linear combinations of earlier columns."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    tol = tol if tol is not None else max(n, p) * np.finfo(float).eps * 100
    basis = np.zeros((n, 0))
    bad = []
    for j in range(p):
        v = Xs[:, j]
        if basis.shape[1]:
            v = v - basis @ (basis.T @ v)
            v = v - basis @ (basis.T @ v)
        nv = np.linalg.norm(v)
        if nv <= tol * 10:
            bad.append(j)
        else:
            basis = np.column_stack([basis, v / nv])
    return bad


def ols_fit(X, y, names=None, add_intercept=True) -> OLSResult:
    """Least squares with classical standard errors.

    ``adj_r2 = 1 - (1 - R^2)(n - 1)/(n - K - 1)`` where K counts the regressors
    other than the intercept.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    if add_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
        names = ["const"] + names
    n, p = X.shape
    if n <= p:
        raise InvalidInputError(f"need more rows ({n}) than columns ({p})")
    bad = dependent_columns(X)
    if bad:
        cols = [names[j] for j in bad]
        raise SingularDesignError(f"design is rank deficient; dependent columns: {cols}", cols)
    Q, R = np.linalg.qr(X)
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ beta
    ssr = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    K = p - 1 if add_intercept else p
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - K - 1) if n - K - 1 > 0 else float("nan")
    sigma2 = ssr / (n - p)
    Rinv = np.linalg.inv(R)
    se = np.sqrt(sigma2 * (Rinv ** 2).sum(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    return OLSResult(beta, float(adj), t, se, sigma2, names)


def informative_columns(X) -> np.ndarray:
    """Mask of columns that vary across rows (absent dummy levels are constant)."""
    X = np.asarray(X, dtype=float)
    return np.ptp(X, axis=0) > 0


class OLSRegressor:
    """Fit/predict wrapper; coordinates are accepted and ignored.

    Columns that are constant in the training rows are dropped before fitting.
    """

    def fit(self, X, y, coords=None):
        self.keep_ = informative_columns(X)
        self.result_ = ols_fit(np.asarray(X)[:, self.keep_], y)
        return self

    def predict(self, X0, coords0=None):
        return self.result_.predict(np.asarray(X0)[:, self.keep_])
