#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Squared-loss gradient boosting over depth-limited regression trees.

Trees are grown by sklearn's exact-split DecisionTreeRegressor on the current residuals and
then kept as plain arrays, so a scorer persists as text and predicts without sklearn objects.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np
from sklearn.tree import DecisionTreeRegressor
from tqdm import tqdm

from . import CONFIG, NetflowSynthError, logger

LEAF = -1


class ScorerError(NetflowSynthError):
    pass


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """
    Node i splits on feature[i] at threshold[i] (x <= threshold goes left) unless left[i] == LEAF.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        for attr, dtype in (
            ("feature", np.int64),
            ("threshold", np.float64),
            ("left", np.int64),
            ("right", np.int64),
            ("value", np.float64),
        ):
            object.__setattr__(self, attr, np.array(getattr(self, attr), dtype=dtype).reshape(-1))

    @classmethod
    def from_sklearn(cls, model):
        tree = model.tree_
        return cls(tree.feature, tree.threshold, tree.children_left, tree.children_right, tree.value[:, 0, 0])

    @property
    def depth(self):
        depths = np.zeros(len(self.left), dtype=np.int64)
        for node in range(len(self.left)):
            if self.left[node] != LEAF:
                depths[self.left[node]] = depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def predict(self, X):
        # sklearn routes samples with float32 features; do the same to land in the same leaves
        X = np.asarray(X, dtype=np.float32).astype(np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.left[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            at = node[rows]
            go_left = X[rows, self.feature[at]] <= self.threshold[at]
            node[rows] = np.where(go_left, self.left[at], self.right[at])
            active = self.left[node] != LEAF
        return self.value[node]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["feature"], data["threshold"], data["left"], data["right"], data["value"])


@dataclass(frozen=True, eq=False)
class BoostedScorer:
    """
    prediction = base + lr * sum(tree outputs)
    """

    base: float
    lr: float
    trees: List[RegressionTree] = field(default_factory=list)
    n_inputs: int = 0
    train_mse: List[float] = field(default_factory=list)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or (self.n_inputs and X.shape[1] != self.n_inputs):
            raise ScorerError(f"Scorer expects {self.n_inputs} inputs per row, got shape {X.shape}")
        prediction = np.full(len(X), self.base)
        for tree in self.trees:
            prediction += self.lr * tree.predict(X)
        return prediction

    def to_dict(self):
        return {
            "base": float(self.base),
            "lr": float(self.lr),
            "n_inputs": int(self.n_inputs),
            "trees": [tree.to_dict() for tree in self.trees],
            "train_mse": [float(v) for v in self.train_mse],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            base=data["base"],
            lr=data["lr"],
            trees=[RegressionTree.from_dict(tree) for tree in data["trees"]],
            n_inputs=data.get("n_inputs", 0),
            train_mse=data.get("train_mse", []),
        )


def fit_boosted(X, y, trees=None, depth=None, lr=None, seed=0):  # pylint: disable=too-many-arguments
    """
    Each round fits a tree to the residuals and adds lr * tree to the ensemble.
    train_mse[i] is the training MSE after i trees (train_mse[0]: base prediction only).
    """
    trees = CONFIG["ALIGN_TREES"] if trees is None else trees
    depth = CONFIG["ALIGN_DEPTH"] if depth is None else depth
    lr = CONFIG["ALIGN_LR"] if lr is None else lr
    X, y = np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or len(X) != len(y):
        raise ScorerError(f"Inputs {X.shape} and targets {y.shape} do not match")
    if not len(y):
        raise ScorerError("At least one training pair is required")
    if trees < 0 or depth < 1 or not 0 < lr <= 1:
        raise ScorerError(f"Bad boosting parameters: trees={trees}, depth={depth}, lr={lr}")

    base = float(y.mean())
    residual = y - base
    history = [float(np.mean(residual**2))]
    fitted = []
    progress = tqdm(range(trees), desc="Boosting", ascii=True, dynamic_ncols=True, disable=not CONFIG["PROGRESS_BARS"])
    for _ in progress:
        model = DecisionTreeRegressor(max_depth=depth, random_state=seed)
        model.fit(X, residual)
        tree = RegressionTree.from_sklearn(model)
        residual = residual - lr * tree.predict(X)
        fitted.append(tree)
        history.append(float(np.mean(residual**2)))
    logger.debug("Boosted %d trees (depth %d, lr %s): train MSE %.6g -> %.6g", trees, depth, lr, history[0], history[-1])
    return BoostedScorer(base=base, lr=lr, trees=fitted, n_inputs=X.shape[1], train_mse=history)
