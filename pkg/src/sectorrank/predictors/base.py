"""Common estimator plumbing for window-based price predictors."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .windows import Standardizer, SupervisedWindowSet


def check_windows(X, y=None):
    """Validate a (blocks, lookback, features) array and optional targets."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or min(X.shape) < 1:
        raise ValueError(f"expected (blocks, lookback, features) input, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain non-finite values")
    if y is None:
        return X
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"{X.shape[0]} blocks but {y.shape[0]} targets")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain non-finite values")
    return X, y


class WindowRegressor(RegressorMixin, BaseEstimator):
    """Base for predictors mapping a lookback block to one future price.

    Subclasses implement ``_fit_scaled(Z, t)`` and ``_predict_scaled(Z)`` on
    standardized inputs/targets; scaling is skipped when ``standardize`` is
    False (the identity scaler is attached instead).
    """

    standardize: bool

    def fit(self, X, y=None):
        if isinstance(X, SupervisedWindowSet):
            X, y = X.inputs, X.targets
        X, y = check_windows(X, y)
        if self.standardize:
            scaler = Standardizer().fit(X, y)
        else:
            scaler = Standardizer.identity(X.shape[2])
        self.standardizer_ = scaler
        self.lookback_ = X.shape[1]
        self.n_features_in_ = X.shape[2]
        self._fit_scaled(scaler.transform(X), scaler.transform_target(y))
        return self

    def predict(self, X):
        if not hasattr(self, "standardizer_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted")
        X = check_windows(X)
        if X.shape[1:] != (self.lookback_, self.n_features_in_):
            raise ValueError(
                f"expected blocks of shape {(self.lookback_, self.n_features_in_)}, got {X.shape[1:]}"
            )
        z = self._predict_scaled(self.standardizer_.transform(X))
        return self.standardizer_.inverse_transform_target(z)

    def _fit_scaled(self, Z, t):  # pragma: no cover - abstract
        raise NotImplementedError

    def _predict_scaled(self, Z):  # pragma: no cover - abstract
        raise NotImplementedError


def predict_price(model: WindowRegressor, block) -> float:
    """Predicted price for a single (lookback, features) block."""
    block = np.asarray(block, dtype=float)
    if block.ndim != 2:
        raise ValueError("block must be a (lookback, features) matrix")
    return float(model.predict(block[None])[0])
