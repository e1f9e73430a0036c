"""CART decision trees and random forests.

Splits are exact midpoints between sorted feature values; classification
uses Gini impurity, regression (for boosting) uses squared error. Split
search is vectorized over all candidate features at once.
"""
from __future__ import annotations

import numpy as np

from .base import rng_from, scores_to_labels


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "value", "rows")

    def __init__(self):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.value = None      # class distribution or regression mean
        self.rows = None       # training row indices (regression leaves only)

    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf():
            return {"value": np.asarray(self.value).tolist()}
        return {"feature": int(self.feature), "threshold": float(self.threshold),
                "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "_Node":
        node = cls()
        if "value" in data:
            node.value = np.asarray(data["value"], dtype=float)
            return node
        node.feature = data["feature"]
        node.threshold = data["threshold"]
        node.left = cls.from_dict(data["left"])
        node.right = cls.from_dict(data["right"])
        return node


def _best_split_gini(X: np.ndarray, onehot: np.ndarray, min_leaf: int):
    """Best (feature, threshold) by weighted Gini over all features at once."""
    m = X.shape[0]
    if m < 2 * min_leaf:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    cum = np.cumsum(onehot[order], axis=0)            # (m, f, c)
    total = cum[-1]                                   # (f, c)
    left = cum[:-1]
    right = total[None, :, :] - left
    nl = np.arange(1, m, dtype=float)[:, None]
    nr = m - nl
    gini_l = 1.0 - ((left / nl[..., None]) ** 2).sum(-1)
    gini_r = 1.0 - ((right / nr[..., None]) ** 2).sum(-1)
    cost = (nl * gini_l + nr * gini_r) / m            # (m-1, f)
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    cost = np.where(valid, cost, np.inf)
    pos, feat = np.unravel_index(np.argmin(cost), cost.shape)
    if not np.isfinite(cost[pos, feat]):
        return None
    threshold = 0.5 * (xs[pos, feat] + xs[pos + 1, feat])
    return int(feat), float(threshold), float(cost[pos, feat])


def _best_split_sse(X: np.ndarray, y: np.ndarray, min_leaf: int):
    m = X.shape[0]
    if m < 2 * min_leaf:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ys = y[order]                                     # (m, f)
    cum = np.cumsum(ys, axis=0)
    cum2 = np.cumsum(ys ** 2, axis=0)
    tot, tot2 = cum[-1], cum2[-1]
    nl = np.arange(1, m, dtype=float)[:, None]
    nr = m - nl
    sse_l = cum2[:-1] - cum[:-1] ** 2 / nl
    sse_r = (tot2 - cum2[:-1]) - (tot - cum[:-1]) ** 2 / nr
    cost = sse_l + sse_r
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    cost = np.where(valid, cost, np.inf)
    pos, feat = np.unravel_index(np.argmin(cost), cost.shape)
    if not np.isfinite(cost[pos, feat]):
        return None
    threshold = 0.5 * (xs[pos, feat] + xs[pos + 1, feat])
    return int(feat), float(threshold), float(cost[pos, feat])


class _TreeBuilder:
    def __init__(self, max_depth, min_leaf, max_features, rng):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.rng = rng

    def feature_subset(self, d: int) -> np.ndarray:
        if self.max_features is None or self.max_features >= d:
            return np.arange(d)
        return np.sort(self.rng.choice(d, size=self.max_features, replace=False))

    def build(self, X, target, depth, make_leaf, find_split, is_pure):
        node = _Node()
        if (self.max_depth is not None and depth >= self.max_depth) or is_pure(target) \
                or X.shape[0] < 2 * self.min_leaf:
            make_leaf(node, target)
            return node
        feats = self.feature_subset(X.shape[1])
        split = find_split(X[:, feats], target, self.min_leaf)
        if split is None:
            make_leaf(node, target)
            return node
        feat, threshold, _ = split
        node.feature = int(feats[feat])
        node.threshold = threshold
        go_left = X[:, node.feature] <= threshold
        node.left = self.build(X[go_left], target[go_left], depth + 1,
                               make_leaf, find_split, is_pure)
        node.right = self.build(X[~go_left], target[~go_left], depth + 1,
                                make_leaf, find_split, is_pure)
        return node


def _apply(node: _Node, X: np.ndarray) -> np.ndarray:
    out = np.empty((X.shape[0],) + node_value_shape(node), dtype=float)
    _apply_rec(node, X, np.arange(X.shape[0]), out)
    return out


def node_value_shape(node: _Node):
    while not node.is_leaf():
        node = node.left
    return np.shape(node.value)


def _apply_rec(node: _Node, X, idx, out):
    if idx.size == 0:
        return
    if node.is_leaf():
        out[idx] = node.value
        return
    go_left = X[idx, node.feature] <= node.threshold
    _apply_rec(node.left, X, idx[go_left], out)
    _apply_rec(node.right, X, idx[~go_left], out)


class DecisionTreeClassifier:
    """CART with Gini impurity. max_depth=None grows until pure."""

    def __init__(self, max_depth=None, min_leaf=1, max_features=None, seed=0):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.seed = seed
        self.root = None
        self.n_classes = 0

    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes if n_classes is not None else int(y.max()) + 1
        onehot = np.eye(self.n_classes)[y]
        builder = _TreeBuilder(self.max_depth, self.min_leaf, self.max_features,
                               rng_from(self.seed))

        def make_leaf(node, target):
            node.value = target.mean(axis=0) if target.size else np.full(
                self.n_classes, 1.0 / self.n_classes)

        def find_split(Xs, target, min_leaf):
            return _best_split_gini(Xs, target, min_leaf)

        def is_pure(target):
            return bool((target.sum(axis=0) > 0).sum() <= 1)

        self.root = builder.build(X, onehot, 0, make_leaf, find_split, is_pure)
        return self

    def predict_scores(self, X):
        return _apply(self.root, np.asarray(X, dtype=float))

    def predict(self, X):
        return scores_to_labels(self.predict_scores(X))

    def to_dict(self):
        return {"family": "tree", "version": 1, "n_classes": self.n_classes,
                "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, data):
        model = cls()
        model.n_classes = data["n_classes"]
        model.root = _Node.from_dict(data["root"])
        return model


class RegressionTree:
    """Squared-error CART used as the boosting weak learner. Leaves keep
    their training row indices so callers can re-aggregate leaf values."""

    def __init__(self, max_depth=3, min_leaf=1, max_features=None, seed=0):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.seed = seed
        self.root = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        rows = np.arange(X.shape[0])
        builder = _TreeBuilder(self.max_depth, self.min_leaf, self.max_features,
                               rng_from(self.seed))
        target = np.stack([y, rows.astype(float)], axis=1)

        def make_leaf(node, tgt):
            node.value = np.array([tgt[:, 0].mean() if tgt.size else 0.0])
            node.rows = tgt[:, 1].astype(int)

        def find_split(Xs, tgt, min_leaf):
            return _best_split_sse(Xs, tgt[:, 0], min_leaf)

        def is_pure(tgt):
            return bool(tgt.shape[0] == 0 or np.all(tgt[:, 0] == tgt[0, 0]))

        self.root = builder.build(X, target, 0, make_leaf, find_split, is_pure)
        return self

    def leaves(self):
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf():
                out.append(node)
            else:
                stack.extend([node.right, node.left])
        return out

    def predict(self, X):
        return _apply(self.root, np.asarray(X, dtype=float))[:, 0]


class RandomForestClassifier:
    """Bootstrap-aggregated CART trees with per-split feature subsets;
    prediction is the mode of the trees' votes, ties broken by the summed
    class distributions and then by the lowest class index."""

    def __init__(self, n_trees=50, max_depth=None, min_leaf=1,
                 max_features="sqrt", bootstrap=True, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees: list[DecisionTreeClassifier] = []
        self.n_classes = 0

    def _resolve_features(self, d):
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(d)))
        return self.max_features

    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes if n_classes is not None else int(y.max()) + 1
        seeds = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        self.trees = []
        for t in range(self.n_trees):
            rng = np.random.Generator(np.random.PCG64(seeds[t]))
            idx = rng.integers(0, X.shape[0], size=X.shape[0]) if self.bootstrap \
                else np.arange(X.shape[0])
            tree = DecisionTreeClassifier(
                max_depth=self.max_depth, min_leaf=self.min_leaf,
                max_features=self._resolve_features(X.shape[1]),
                seed=int(rng.integers(2 ** 31)))
            tree.fit(X[idx], y[idx], self.n_classes)
            self.trees.append(tree)
        return self

    def predict_scores(self, X):
        """Vote share per class, with the mean leaf distribution as an
        epsilon-weight so argmax(scores) equals the documented mode /
        tie-break prediction exactly."""
        votes = np.stack([t.predict(X) for t in self.trees], axis=1)
        counts = np.stack([(votes == c).sum(axis=1) for c in range(self.n_classes)],
                          axis=1).astype(float)
        mean_dist = np.mean([t.predict_scores(X) for t in self.trees], axis=0)
        return (counts + mean_dist) / (len(self.trees) + 1)

    def predict(self, X):
        return scores_to_labels(self.predict_scores(X))

    def to_dict(self):
        return {"family": "forest", "version": 1, "n_classes": self.n_classes,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, data):
        model = cls(n_trees=len(data["trees"]))
        model.n_classes = data["n_classes"]
        model.trees = [DecisionTreeClassifier.from_dict(t) for t in data["trees"]]
        return model
