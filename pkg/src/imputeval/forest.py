"""Random forests of CART trees for regression and classification.

Each tree is grown on a bootstrap sample (size n, with replacement). At every
node ``mtry`` features are sampled without replacement and the best split
among them is chosen by variance reduction (regression) or Gini decrease
(classification). Numeric thresholds are midpoints between adjacent distinct
values; categorical features split one level against the rest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import _cart

logger = logging.getLogger(__name__)

__all__ = [
    "ForestConfig",
    "Tree",
    "Forest",
    "fit_forest",
    "predict",
    "sample_tree_prediction",
    "sample_predictions",
]


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters; ``None`` picks the conventional default.

    Defaults: ``mtry = floor(sqrt(p))`` for classification and
    ``max(floor(p / 3), 1)`` for regression; ``min_node_size`` 1 for
    classification and 5 for regression; no depth cap.
    """

    n_trees: int = 100
    mtry: Optional[int] = None
    min_node_size: Optional[int] = None
    max_depth: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

    def resolved(self, p: int, classification: bool) -> "ForestConfig":
        mtry = self.mtry
        if mtry is None:
            mtry = max(int(math.isqrt(p)), 1) if classification else max(p // 3, 1)
        if not 1 <= mtry <= p:
            raise ValueError(f"mtry={mtry} outside [1, {p}]")
        node = self.min_node_size
        if node is None:
            node = 1 if classification else 5
        return replace(self, mtry=mtry, min_node_size=max(int(node), 1))


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    class_counts: np.ndarray
    leaf_start: np.ndarray
    leaf_len: np.ndarray
    leaf_rows: np.ndarray
    in_bag: np.ndarray

    def apply(self, X: np.ndarray, is_cat: np.ndarray) -> np.ndarray:
        return _cart.apply_tree(self.feature, self.threshold, self.left, self.right, is_cat, X)

    def leaf_members(self, leaf: int) -> np.ndarray:
        s = self.leaf_start[leaf]
        return self.leaf_rows[s : s + self.leaf_len[leaf]]


@dataclass(frozen=True)
class Forest:
    trees: tuple[Tree, ...]
    is_cat: np.ndarray
    n_classes: int
    y_train: np.ndarray
    config: ForestConfig
    constant: bool = False

    @property
    def classification(self) -> bool:
        return self.n_classes > 0

    @property
    def n_features(self) -> int:
        return len(self.is_cat)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return np.ascontiguousarray(X)


def fit_forest(
    X,
    y,
    cfg: ForestConfig = ForestConfig(),
    *,
    categorical: Sequence[bool] | None = None,
    n_levels: Sequence[int] | None = None,
    n_classes: int = 0,
) -> Forest:
    """Fit a random forest.

    Parameters
    ----------
    X : (n, p) array
        Predictors; categorical columns hold integer category codes.
    y : (n,) array
        Real responses, or class codes ``0 .. n_classes - 1``.
    cfg : ForestConfig
    categorical : bool per column, optional
    n_levels : number of categories per column (categorical columns only)
    n_classes : int
        0 for regression, otherwise the number of target classes.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < 2 or p < 1:
        raise ValueError("need at least 2 rows and 1 feature")
    if y.shape != (n,):
        raise ValueError("y must have one entry per row of X")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be complete and finite")
    is_cat = np.zeros(p, dtype=np.bool_) if categorical is None else np.asarray(categorical, dtype=np.bool_)
    if n_levels is None:
        levels = np.where(is_cat, X.max(axis=0).astype(np.int64) + 1, 0) if p else np.zeros(0, np.int64)
    else:
        levels = np.asarray(n_levels, dtype=np.int64)
    levels = np.maximum(levels, np.where(is_cat, X.max(axis=0) + 1, 0).astype(np.int64))
    if n_classes:
        if y.min() < 0 or y.max() >= n_classes:
            raise ValueError("class codes out of range")

    cfg = cfg.resolved(p, n_classes > 0)
    constant = bool(np.all(y == y[0]))
    if constant:
        logger.info("constant response; forest predicts %r", y[0])
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    rng = np.random.default_rng(cfg.seed)
    max_depth = -1 if cfg.max_depth is None else int(cfg.max_depth)
    trees = []
    for _ in range(cfg.n_trees):
        rows = rng.integers(0, n, size=n)
        tree_seed = int(rng.integers(0, 2**31 - 1))
        out = _cart.build_tree(
            X, order, y, is_cat, levels, int(n_classes), rows.astype(np.int64),
            int(cfg.mtry), int(cfg.min_node_size), max_depth, tree_seed,
        )
        trees.append(Tree(*out, in_bag=rows))
    return Forest(tuple(trees), is_cat, int(n_classes), y.copy(), cfg, constant)


def _check_rows(forest: Forest, rows) -> np.ndarray:
    X = _as_matrix(rows)
    if X.shape[1] != forest.n_features:
        raise ValueError(
            f"expected {forest.n_features} features, got {X.shape[1]}"
        )
    return X


def _leaves(forest: Forest, X: np.ndarray) -> np.ndarray:
    return np.column_stack([t.apply(X, forest.is_cat) for t in forest.trees])


def _vote(votes: np.ndarray, n_classes: int) -> np.ndarray:
    # votes: (n_rows, n_trees) class codes; ties go to the lowest code
    counts = np.zeros((votes.shape[0], n_classes), dtype=np.int64)
    for t in range(votes.shape[1]):
        np.add.at(counts, (np.arange(votes.shape[0]), votes[:, t]), 1)
    return counts.argmax(axis=1)


def predict(forest: Forest, rows) -> np.ndarray:
    """Mean tree prediction (regression) or majority vote (classification)."""
    X = _check_rows(forest, rows)
    leaves = _leaves(forest, X)
    tree_preds = np.column_stack(
        [t.value[leaves[:, k]] for k, t in enumerate(forest.trees)]
    )
    if forest.classification:
        return _vote(tree_preds.astype(np.int64), forest.n_classes)
    return tree_preds.mean(axis=1)


def oob_predict(forest: Forest, X) -> np.ndarray:
    """Out-of-bag regression predictions for the training rows (NaN if never out of bag)."""
    X = _check_rows(forest, X)
    n = X.shape[0]
    total = np.zeros(n)
    count = np.zeros(n)
    for t in forest.trees:
        oob = np.ones(n, dtype=bool)
        oob[t.in_bag] = False
        idx = np.flatnonzero(oob)
        leaves = t.apply(X[idx], forest.is_cat)
        total[idx] += t.value[leaves]
        count[idx] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        return total / count


def sample_predictions(forest: Forest, rows, rng) -> np.ndarray:
    """One stochastic prediction per row.

    For every row a tree is picked uniformly at random. Regression draws one
    of the training responses stored in the reached leaf; classification
    draws a class from the leaf's class distribution.
    """
    X = _check_rows(forest, rows)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n = X.shape[0]
    picks = rng.integers(0, len(forest.trees), size=n)
    u = rng.uniform(size=n)
    out = np.empty(n)
    for k in np.unique(picks):
        sel = np.flatnonzero(picks == k)
        tree = forest.trees[k]
        leaves = tree.apply(X[sel], forest.is_cat)
        for i, leaf in zip(sel, leaves):
            if forest.classification:
                counts = tree.class_counts[leaf]
                cum = np.cumsum(counts)
                out[i] = int(np.searchsorted(cum, u[i] * cum[-1], side="right"))
                out[i] = min(out[i], forest.n_classes - 1)
            else:
                members = tree.leaf_members(leaf)
                out[i] = forest.y_train[members[int(u[i] * members.size)]]
    return out


def sample_tree_prediction(forest: Forest, row, seed) -> float:
    """Single-row version of :func:`sample_predictions`."""
    return float(sample_predictions(forest, np.atleast_2d(row), seed)[0])
