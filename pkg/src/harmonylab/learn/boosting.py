"""Gradient boosted decision trees on logistic loss.

Newton leaf values with optional L2 leaf regularization plus shrinkage;
the same machinery backs both the plain "gb" configuration and the more
regularized "xgboost"-style one. Training log-loss is recorded per round
and is non-increasing for sane step sizes.
"""
from __future__ import annotations

import numpy as np

from .base import scores_to_labels, softmax
from .tree import RegressionTree, _apply


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


class GradientBoostingClassifier:
    def __init__(self, n_rounds=100, learning_rate=0.1, max_depth=3, min_leaf=1,
                 l2_leaf=0.0, seed=0):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.l2_leaf = l2_leaf
        self.seed = seed
        self.n_classes = 0
        self.init_score = None
        self.trees = []            # binary: [tree]; multiclass: [[tree per class]]
        self.train_loss: list[float] = []

    # -- binary ------------------------------------------------------------
    def _fit_binary(self, X, y):
        n = X.shape[0]
        p0 = np.clip(y.mean(), 1e-9, 1 - 1e-9)
        self.init_score = np.array([np.log(p0 / (1 - p0))])
        F = np.full(n, self.init_score[0])
        for r in range(self.n_rounds):
            p = _sigmoid(F)
            residual = y - p
            tree = RegressionTree(self.max_depth, self.min_leaf, seed=self.seed + r)
            tree.fit(X, residual)
            for leaf in tree.leaves():
                rows = leaf.rows
                hess = (p[rows] * (1 - p[rows])).sum() + self.l2_leaf
                leaf.value = np.array([residual[rows].sum() / hess if hess > 0 else 0.0])
            F = F + self.learning_rate * tree.predict(X)
            self.trees.append(tree)
            p = _sigmoid(F)
            self.train_loss.append(float(-np.mean(
                y * np.log(np.clip(p, 1e-12, None)) +
                (1 - y) * np.log(np.clip(1 - p, 1e-12, None)))))

    def _raw_binary(self, X):
        F = np.full(X.shape[0], self.init_score[0])
        for tree in self.trees:
            F = F + self.learning_rate * tree.predict(X)
        return F

    # -- multiclass (one tree per class per round) --------------------------
    def _fit_multi(self, X, y):
        n, k = X.shape[0], self.n_classes
        onehot = np.eye(k)[y]
        prior = np.clip(onehot.mean(axis=0), 1e-9, None)
        self.init_score = np.log(prior)
        F = np.tile(self.init_score, (n, 1))
        for r in range(self.n_rounds):
            p = softmax(F)
            round_trees = []
            for c in range(k):
                residual = onehot[:, c] - p[:, c]
                tree = RegressionTree(self.max_depth, self.min_leaf,
                                      seed=self.seed + r * k + c)
                tree.fit(X, residual)
                for leaf in tree.leaves():
                    rows = leaf.rows
                    denom = (np.abs(residual[rows]) * (1 - np.abs(residual[rows]))).sum() \
                        + self.l2_leaf
                    num = residual[rows].sum()
                    scale = (k - 1) / k
                    leaf.value = np.array([scale * num / denom if denom > 0 else 0.0])
                F[:, c] += self.learning_rate * tree.predict(X)
                round_trees.append(tree)
            self.trees.append(round_trees)
            p = softmax(F)
            self.train_loss.append(float(-np.mean(
                np.log(np.clip(p[np.arange(n), y], 1e-12, None)))))

    def _raw_multi(self, X):
        F = np.tile(self.init_score, (X.shape[0], 1))
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                F[:, c] += self.learning_rate * tree.predict(X)
        return F

    # -- public -------------------------------------------------------------
    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes if n_classes is not None else int(y.max()) + 1
        self.trees = []
        self.train_loss = []
        if self.n_classes == 2:
            self._fit_binary(X, y.astype(float))
        else:
            self._fit_multi(X, y)
        return self

    def predict_scores(self, X):
        X = np.asarray(X, dtype=float)
        if self.n_classes == 2:
            p = _sigmoid(self._raw_binary(X))
            return np.stack([1 - p, p], axis=1)
        return softmax(self._raw_multi(X))

    def predict(self, X):
        return scores_to_labels(self.predict_scores(X))
