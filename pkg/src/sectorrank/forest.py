"""Variance-reduction regression trees and a bootstrap random forest.

Feature importance is mean decrease in impurity: for every internal node the
sample-weighted drop in squared error is credited to its split feature,
summed per tree, averaged over the forest and normalized to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

__all__ = [
    "Leaf",
    "Split",
    "TreeNode",
    "RegressionTree",
    "RandomForestModel",
    "fit_tree",
    "fit_forest",
    "predict_forest",
    "importances",
    "tree_rng",
]


@dataclass(frozen=True)
class Leaf:
    value: float
    n_samples: int


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    impurity_decrease: float
    n_samples: int


TreeNode = Union[Leaf, Split]


def tree_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for tree ``index`` of a forest seeded with ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


@njit(cache=True)
def _split_rows(X, y, rows, features):
    """Best split of ``rows`` over ``features``: (feature, threshold, sse_decrease).

    Thresholds are midpoints between consecutive distinct sorted values. Ties
    (within 1e-12 of the parent error) go to the lowest feature index, then
    the lowest threshold. Feature is -1 when no split exists.
    """
    n = rows.shape[0]
    total = 0.0
    total_sq = 0.0
    for i in range(n):
        v = y[rows[i]]
        total += v
        total_sq += v * v
    mean = total / n
    parent = 0.0
    for i in range(n):
        parent += (y[rows[i]] - mean) ** 2
    tol = 1e-12 * parent
    best_sse = np.inf
    best_feature = -1
    best_threshold = 0.0
    col = np.empty(n)
    for f in np.sort(features):
        for i in range(n):
            col[i] = X[rows[i], f]
        order = np.argsort(col, kind="mergesort")
        sum_left = 0.0
        sq_left = 0.0
        for r in range(n - 1):
            yi = y[rows[order[r]]]
            sum_left += yi
            sq_left += yi * yi
            lo = col[order[r]]
            hi = col[order[r + 1]]
            if not hi > lo:
                continue
            n_left = r + 1.0
            n_right = n - n_left
            sse = (sq_left - sum_left * sum_left / n_left) + (
                (total_sq - sq_left) - (total - sum_left) ** 2 / n_right
            )
            if sse < best_sse - tol:
                best_sse = sse
                best_feature = f
                threshold = 0.5 * (lo + hi)
                # adjacent floats: the midpoint can round onto the right value
                best_threshold = threshold if threshold < hi else lo
    if best_feature < 0:
        return -1, 0.0, 0.0
    # exact decrease from the partition itself, not from running sums
    s_l = 0.0
    s_r = 0.0
    n_l = 0
    for i in range(n):
        if X[rows[i], best_feature] <= best_threshold:
            s_l += y[rows[i]]
            n_l += 1
        else:
            s_r += y[rows[i]]
    m_l = s_l / n_l
    m_r = s_r / (n - n_l)
    child = 0.0
    for i in range(n):
        v = y[rows[i]]
        if X[rows[i], best_feature] <= best_threshold:
            child += (v - m_l) ** 2
        else:
            child += (v - m_r) ** 2
    return best_feature, best_threshold, max(parent - child, 0.0)


@njit(cache=True)
def _grow_flat(X, y, max_depth, min_split, k, keys):
    """Depth-first tree growth into flat arrays.

    Node ``j`` draws its feature subset as the ``k`` smallest entries of
    ``keys[j]``. ``max_depth < 0`` means unlimited.
    """
    n = y.shape[0]
    cap = 2 * n
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    decrease = np.zeros(cap)
    rows = np.arange(n)
    p = X.shape[1]
    # stack entries: node id, start, end, depth
    stack = np.empty((cap, 4), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        sub = rows[start:end]
        m = end - start
        lo = np.inf
        hi = -np.inf
        acc = 0.0
        for i in range(m):
            v = y[sub[i]]
            acc += v
            lo = min(lo, v)
            hi = max(hi, v)
        value[node] = acc / m
        count[node] = m
        if (max_depth >= 0 and depth >= max_depth) or m < min_split or hi == lo:
            continue
        if k == p:
            features = np.arange(p)
        else:
            features = np.argsort(keys[node], kind="mergesort")[:k]
        f, t, d = _split_rows(X, y, sub, features)
        if f < 0 or d <= 0.0:
            continue
        # stable in-place partition of rows[start:end]
        buf = sub.copy()
        n_left = 0
        for i in range(m):
            if X[buf[i], f] <= t:
                rows[start + n_left] = buf[i]
                n_left += 1
        j = n_left
        for i in range(m):
            if X[buf[i], f] > t:
                rows[start + j] = buf[i]
                j += 1
        feature[node] = f
        threshold[node] = t
        decrease[node] = d
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        # right pushed first so the left subtree is grown first
        stack[top, 0] = right[node]
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        stack[top + 1, 0] = left[node]
        stack[top + 1, 1] = start
        stack[top + 1, 2] = start + n_left
        stack[top + 1, 3] = depth + 1
        top += 2
    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        count[:n_nodes],
        decrease[:n_nodes],
    )


def _to_nodes(flat) -> TreeNode:
    feature, threshold, left, right, value, count, decrease = flat

    def build(j):
        if feature[j] < 0:
            return Leaf(float(value[j]), int(count[j]))
        return Split(
            int(feature[j]),
            float(threshold[j]),
            build(left[j]),
            build(right[j]),
            float(decrease[j]),
            int(count[j]),
        )

    return build(0)


def fit_tree(
    X,
    y,
    max_depth: int | None = None,
    min_samples_split: int = 2,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> TreeNode:
    """Grow a regression tree greedily minimizing weighted child variance.

    At each node ``max_features`` candidate features are drawn uniformly
    without replacement (all of them when None). Growth stops at
    ``max_depth``, below ``min_samples_split`` samples, on zero variance, or
    when no split reduces the squared error. Leaves predict their mean.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be a non-empty 2-D array with one row per target")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    n, p = X.shape
    k = p if max_features is None else int(max_features)
    if not 1 <= k <= p:
        raise ValueError(f"max_features must be in [1, {p}], got {k}")
    if k < p:
        rng = rng if rng is not None else np.random.default_rng(0)
        keys = rng.random((2 * n, p))
    else:
        keys = np.zeros((1, p))
    depth = -1 if max_depth is None else int(max_depth)
    flat = _grow_flat(X, y, depth, max(int(min_samples_split), 2), k, keys)
    return _to_nodes(flat)


def predict_tree(node: TreeNode, x) -> float:
    while isinstance(node, Split):
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def _predict_tree_batch(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))
    stack = [(node, np.arange(len(X)))]
    while stack:
        current, rows = stack.pop()
        if isinstance(current, Leaf):
            out[rows] = current.value
            continue
        go_left = X[rows, current.feature] <= current.threshold
        stack.append((current.left, rows[go_left]))
        stack.append((current.right, rows[~go_left]))
    return out


def _tree_decrease(node: TreeNode, n_features: int) -> np.ndarray:
    acc = np.zeros(n_features)
    stack = [node]
    while stack:
        current = stack.pop()
        if isinstance(current, Split):
            acc[current.feature] += current.impurity_decrease
            stack.extend((current.left, current.right))
    return acc


def iter_nodes(node: TreeNode):
    stack = [node]
    while stack:
        current = stack.pop()
        yield current
        if isinstance(current, Split):
            stack.extend((current.right, current.left))


class RegressionTree(RegressorMixin, BaseEstimator):
    """Single CART regression tree.

    Parameters
    ----------
    max_depth : int or None
        Depth limit; None grows until the other stopping rules fire.
    min_samples_split : int
        Minimum node size eligible for splitting.
    max_features : int or None
        Features sampled per split; None means all.
    random_state : int
        Seed for feature subsampling.
    """

    def __init__(self, max_depth=None, min_samples_split=2, max_features=None, random_state=0):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        self.tree_ = fit_tree(
            X,
            y,
            self.max_depth,
            self.min_samples_split,
            self.max_features,
            np.random.default_rng(self.random_state),
        )
        self.feature_importances_ = _normalize(_tree_decrease(self.tree_, self.n_features_in_))
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        X = check_array(X, dtype=float)
        _check_width(X, self.n_features_in_)
        return _predict_tree_batch(self.tree_, X)


def _normalize(scores: np.ndarray) -> np.ndarray:
    total = scores.sum()
    if total <= 0.0:
        return np.zeros_like(scores)
    return scores / total


def _check_width(X, n_features):
    if X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")


class RandomForestModel(RegressorMixin, BaseEstimator):
    """Bootstrap ensemble of :class:`RegressionTree` with MDI importances.

    ``max_features="third"`` resolves to ceil(p / 3) at fit time. Tree ``i``
    draws its bootstrap sample and feature subsets from
    ``tree_rng(random_state, i)``, so results do not depend on fitting order.

    Attributes
    ----------
    trees_ : list of TreeNode
    feature_importances_ : ndarray of shape (n_features,)
    """

    def __init__(
        self,
        n_estimators=100,
        max_depth=None,
        min_samples_split=2,
        max_features="third",
        bootstrap=True,
        random_state=0,
    ):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state

    def _resolve_max_features(self, p: int) -> int:
        mf = self.max_features
        if mf is None or mf == "all":
            return p
        if mf == "third":
            return max(1, math.ceil(p / 3))
        if isinstance(mf, float):
            return max(1, math.ceil(mf * p))
        return int(mf)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        n, p = X.shape
        k = self._resolve_max_features(p)
        trees = []
        for i in range(self.n_estimators):
            rng = tree_rng(self.random_state, i)
            if self.bootstrap:
                rows = rng.integers(0, n, size=n)
                Xb, yb = X[rows], y[rows]
            else:
                Xb, yb = X, y
            trees.append(fit_tree(Xb, yb, self.max_depth, self.min_samples_split, k, rng))
        self.trees_ = trees
        self.n_features_in_ = p
        self.feature_importances_ = importances(self)
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=float)
        _check_width(X, self.n_features_in_)
        return np.mean([_predict_tree_batch(t, X) for t in self.trees_], axis=0)


def fit_forest(X, y, hp: dict | None = None, seed: int = 0) -> RandomForestModel:
    """Fit a :class:`RandomForestModel` with hyperparameters ``hp``."""
    params = dict(hp or {})
    params["random_state"] = seed
    return RandomForestModel(**params).fit(X, y)


def predict_forest(model: RandomForestModel, x) -> float:
    """Mean of per-tree leaf predictions for a single feature vector."""
    check_is_fitted(model, "trees_")
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != model.n_features_in_:
        raise ValueError(f"expected {model.n_features_in_} features, got {x.shape[0]}")
    return float(np.mean([predict_tree(t, x) for t in model.trees_]))


def importances(model: RandomForestModel) -> np.ndarray:
    """Normalized mean-decrease-in-impurity per feature (all zero without splits)."""
    check_is_fitted(model, "trees_")
    p = model.n_features_in_
    total = np.zeros(p)
    for tree in model.trees_:
        total += _tree_decrease(tree, p)
    return _normalize(total / len(model.trees_))
