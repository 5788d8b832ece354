"""Supervised lookback windows and z-score scaling shared by all predictors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from ..marketdata import MonthlyPanel
from ..rfe import FeatureSelection

__all__ = ["SupervisedWindowSet", "Standardizer", "make_supervised", "query_block"]


@dataclass(frozen=True)
class SupervisedWindowSet:
    """Blocks of ``lookback`` months of features with the price ``horizon`` months later.

    ``inputs`` has shape (n_blocks, lookback, n_features); ``targets`` shape
    (n_blocks,). ``end_months[i]`` is the last month of block ``i``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    end_months: pd.PeriodIndex
    feature_names: tuple[str, ...]
    horizon: int

    def __post_init__(self):
        if self.inputs.ndim != 3 or self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs must be (blocks, lookback, features) with one target per block")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("window values must be finite")

    @property
    def lookback(self) -> int:
        return self.inputs.shape[1]

    @property
    def target_months(self) -> pd.PeriodIndex:
        return self.end_months + self.horizon

    def __len__(self):
        return self.inputs.shape[0]


def _feature_list(features) -> list[str]:
    if isinstance(features, FeatureSelection):
        return list(features.kept)
    return list(features)


def make_supervised(
    panel: MonthlyPanel, sector: str, features: FeatureSelection | Sequence[str], lookback: int, horizon: int
) -> SupervisedWindowSet:
    """One block per month ``m`` with ``[m-L+1, m]`` and ``m+h`` inside the panel."""
    names = _feature_list(features)
    if lookback < 1 or horizon < 0:
        raise ValueError("lookback must be >= 1 and horizon >= 0")
    missing = [n for n in names if n not in panel.features.columns]
    if missing:
        raise KeyError(f"features not in panel: {', '.join(missing)}")
    if sector not in panel.prices.columns:
        raise KeyError(f"sector {sector!r} not in panel")
    T = len(panel)
    n_blocks = T - lookback - horizon + 1
    if n_blocks < 1:
        raise ValueError(
            f"panel of {T} months too short for lookback {lookback} + horizon {horizon}"
        )
    values = panel.features[names].to_numpy(dtype=float)
    prices = panel.prices[sector].to_numpy(dtype=float)
    ends = np.arange(lookback - 1, lookback - 1 + n_blocks)
    idx = ends[:, None] + np.arange(-lookback + 1, 1)[None, :]
    return SupervisedWindowSet(
        values[idx], prices[ends + horizon], panel.months[ends], tuple(names), horizon
    )


def query_block(panel: MonthlyPanel, features, lookback: int, end=None) -> np.ndarray:
    """Feature block of ``lookback`` months ending at ``end`` (default: last month)."""
    names = _feature_list(features)
    stop = len(panel) if end is None else panel.position(end) + 1
    if stop < lookback:
        raise ValueError(f"need {lookback} months of history before {end}, have {stop}")
    return panel.features[names].to_numpy(dtype=float)[stop - lookback : stop]


class Standardizer:
    """Per-feature z-scores for (blocks, steps, features) inputs plus target scaling.

    Statistics pool every block and step. A constant column gets std 1 and a
    warning rather than a division by zero.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        flat = X.reshape(-1, X.shape[-1])
        self.mean_ = flat.mean(axis=0)
        self.scale_ = self._safe_std(flat.std(axis=0), "input feature")
        if y is not None:
            y = np.asarray(y, dtype=float)
            self.target_mean_ = float(y.mean())
            self.target_scale_ = float(self._safe_std(np.atleast_1d(y.std()), "target")[0])
        else:
            self.target_mean_, self.target_scale_ = 0.0, 1.0
        return self

    @staticmethod
    def _safe_std(std, what):
        std = np.array(std, dtype=float)
        flat = std <= 1e-12 * np.maximum(1.0, np.abs(std))
        if np.any(flat):
            warnings.warn(f"constant {what} column(s); using unit scale", RuntimeWarning, stacklevel=3)
            std[flat] = 1.0
        return std

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean_) / self.scale_

    def inverse_transform(self, Z):
        return np.asarray(Z, dtype=float) * self.scale_ + self.mean_

    def transform_target(self, y):
        return (np.asarray(y, dtype=float) - self.target_mean_) / self.target_scale_

    def inverse_transform_target(self, z):
        return np.asarray(z, dtype=float) * self.target_scale_ + self.target_mean_

    def to_dict(self) -> dict:
        return {
            "mean": self.mean_.tolist(),
            "scale": self.scale_.tolist(),
            "target_mean": self.target_mean_,
            "target_scale": self.target_scale_,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Standardizer":
        obj = cls()
        obj.mean_ = np.array(doc["mean"], dtype=float)
        obj.scale_ = np.array(doc["scale"], dtype=float)
        obj.target_mean_ = float(doc["target_mean"])
        obj.target_scale_ = float(doc["target_scale"])
        return obj

    @classmethod
    def identity(cls, n_features: int) -> "Standardizer":
        obj = cls()
        obj.mean_ = np.zeros(n_features)
        obj.scale_ = np.ones(n_features)
        obj.target_mean_, obj.target_scale_ = 0.0, 1.0
        return obj
