"""Recursive feature elimination driven by random-forest importances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from .forest import RandomForestModel

__all__ = ["FeatureSelection", "RecursiveFeatureEliminator", "rfe_select", "round_seed"]


@dataclass(frozen=True)
class FeatureSelection:
    """Outcome of RFE for one sector.

    ``kept`` is ordered by final importance (descending); ``eliminated``
    lists ``(feature, round)`` in removal order.
    """

    sector: str
    kept: tuple[str, ...]
    eliminated: tuple[tuple[str, int], ...]
    importances: tuple[float, ...]

    def __post_init__(self):
        if len(self.importances) != len(self.kept):
            raise ValueError("one importance per kept feature required")
        names = list(self.kept) + [name for name, _ in self.eliminated]
        if len(set(names)) != len(names):
            raise ValueError("kept and eliminated features overlap")

    @property
    def candidates(self) -> frozenset[str]:
        return frozenset(self.kept) | {name for name, _ in self.eliminated}

    def to_dict(self) -> dict:
        return {
            "sector": self.sector,
            "kept": list(self.kept),
            "importances": list(self.importances),
            "eliminated": [[name, r] for name, r in self.eliminated],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSelection":
        return cls(
            doc["sector"],
            tuple(doc["kept"]),
            tuple((name, int(r)) for name, r in doc["eliminated"]),
            tuple(float(v) for v in doc["importances"]),
        )


def round_seed(seed: int, round_index: int) -> int:
    """Forest seed for elimination round ``round_index``."""
    return int(np.random.SeedSequence([int(seed), int(round_index)]).generate_state(1)[0])


class RecursiveFeatureEliminator(SelectorMixin, BaseEstimator):
    """Backward selection: refit a forest, drop the least important feature(s).

    Parameters
    ----------
    n_features_to_select : int
        Features left when elimination stops.
    step : int
        Features removed per round.
    forest_params : dict or None
        Keyword arguments for :class:`RandomForestModel`.
    random_state : int
        Base seed; round ``r`` uses ``round_seed(random_state, r)``.

    Attributes
    ----------
    support_ : ndarray of bool
    ranking_ : ndarray of int
        1 for kept features; eliminated ones count up in reverse removal order.
    kept_order_ : list of int
        Kept column indices, most important first.
    final_importances_ : ndarray
        Importances of ``kept_order_`` from the last fitted forest.
    elimination_ : list of (int, int)
        (column, round) in removal order.
    """

    def __init__(self, n_features_to_select=4, step=1, forest_params=None, random_state=0):
        self.n_features_to_select = n_features_to_select
        self.step = step
        self.forest_params = forest_params
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        p = X.shape[1]
        k = int(self.n_features_to_select)
        if not 1 <= k <= p:
            raise ValueError(f"n_features_to_select must be in [1, {p}], got {k}")
        if self.step < 1:
            raise ValueError("step must be >= 1")
        active = list(range(p))
        elimination = []
        round_index = 0
        while True:
            forest = RandomForestModel(
                **(self.forest_params or {}), random_state=round_seed(self.random_state, round_index)
            ).fit(X[:, active], y)
            scores = forest.feature_importances_
            if len(active) == k:
                break
            n_drop = min(int(self.step), len(active) - k)
            # least important first; ties drop the highest column index
            order = sorted(range(len(active)), key=lambda j: (scores[j], -active[j]))
            dropped = sorted(order[:n_drop], key=lambda j: (scores[j], -active[j]))
            for j in dropped:
                elimination.append((active[j], round_index))
            drop_cols = {active[j] for j in dropped}
            active = [c for c in active if c not in drop_cols]
            round_index += 1
        rank = sorted(range(len(active)), key=lambda j: (-scores[j], active[j]))
        self.kept_order_ = [active[j] for j in rank]
        self.final_importances_ = np.array([scores[j] for j in rank])
        self.elimination_ = elimination
        support = np.zeros(p, dtype=bool)
        support[active] = True
        self.support_ = support
        ranking = np.ones(p, dtype=int)
        for pos, (col, _) in enumerate(reversed(elimination)):
            ranking[col] = pos + 2
        self.ranking_ = ranking
        self.n_features_in_ = p
        self.n_rounds_ = round_index
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_


def rfe_select(
    X,
    y,
    feature_names,
    target_k: int = 4,
    forest_hp: dict | None = None,
    seed: int = 0,
    sector: str = "",
    step: int = 1,
) -> FeatureSelection:
    """Run RFE and report it by feature name."""
    names = list(feature_names)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(names):
        raise ValueError("feature_names must match the columns of X")
    if target_k > len(names):
        raise ValueError(f"target_k={target_k} exceeds the {len(names)} candidate features")
    rfe = RecursiveFeatureEliminator(target_k, step, forest_hp, seed).fit(X, y)
    return FeatureSelection(
        sector,
        tuple(names[c] for c in rfe.kept_order_),
        tuple((names[c], r) for c, r in rfe.elimination_),
        tuple(float(v) for v in rfe.final_importances_),
    )
