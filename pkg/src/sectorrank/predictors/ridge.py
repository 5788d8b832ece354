"""Closed-form ridge regression over flattened lookback windows."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .base import WindowRegressor

__all__ = ["ridge_solve", "RidgeModel", "ridge_fit"]


def ridge_solve(X, y, alpha: float, fit_intercept: bool = True):
    """Solve ``(X'X + alpha*D) beta = X'y``.

    With ``fit_intercept`` a column of ones is appended and its penalty entry
    in ``D`` is zero. Returns ``(coef, intercept)``; intercept is 0.0 without
    one. Uses a Cholesky solve; when the system is only semi-definite (possible
    only with ``alpha == 0``) the minimum-norm least-squares solution is
    returned instead.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be 2-D with one row per target")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("ridge inputs must be finite")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if fit_intercept:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    penalty = np.full(X.shape[1], float(alpha))
    if fit_intercept:
        penalty[-1] = 0.0
    A = X.T @ X + np.diag(penalty)
    b = X.T @ y
    try:
        with warnings.catch_warnings():
            # an ill-conditioned factorization is treated as singular
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            beta = scipy.linalg.solve(A, b, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
        beta = scipy.linalg.lstsq(A, b)[0]
    if fit_intercept:
        return beta[:-1], float(beta[-1])
    return beta, 0.0


class RidgeModel(WindowRegressor):
    """Ridge regression on the flattened (lookback x features) block.

    Parameters
    ----------
    alpha : float
        L2 penalty; the intercept is not penalized.
    standardize : bool
        z-score inputs and target on the training windows.
    """

    def __init__(self, alpha=10.0, standardize=True):
        self.alpha = alpha
        self.standardize = standardize

    def _fit_scaled(self, Z, t):
        self.coef_, self.intercept_ = ridge_solve(Z.reshape(len(Z), -1), t, self.alpha)

    def _predict_scaled(self, Z):
        return Z.reshape(len(Z), -1) @ self.coef_ + self.intercept_


def ridge_fit(windows, alpha: float = 10.0) -> RidgeModel:
    return RidgeModel(alpha=alpha).fit(windows)
