"""Naive voting and stacked generalization over the model families."""
from __future__ import annotations

import hashlib

import numpy as np

from .base import rng_from, scores_to_labels


def vote_scores(models, X) -> np.ndarray:
    """Vote counts per class plus the normalized summed member scores.

    The counts dominate (member scores are row-stochastic, so their mean
    never bridges a full vote), which makes argmax equal to: majority
    vote, ties broken by summed predict_scores, then lowest class index.
    """
    preds = np.stack([m.predict(X) for m in models], axis=1)
    scores = np.mean([m.predict_scores(X) for m in models], axis=0)
    n_classes = scores.shape[1]
    counts = np.stack([(preds == c).sum(axis=1) for c in range(n_classes)],
                      axis=1).astype(float)
    return (counts + scores) / (len(models) + 1)


def vote(models, X) -> np.ndarray:
    """Majority vote; ties broken by summed predict_scores, then by the
    lowest class index."""
    return scores_to_labels(vote_scores(models, X))


class VotingEnsemble:
    def __init__(self, factories, seed=0):
        self.factories = list(factories)
        self.seed = seed
        self.models = []
        self.n_classes = 0

    def fit(self, X, y, n_classes=None):
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes if n_classes is not None else int(y.max()) + 1
        self.models = []
        for k, factory in enumerate(self.factories):
            model = factory(self.seed + k)
            model.fit(X, y, self.n_classes)
            self.models.append(model)
        return self

    def predict(self, X):
        return vote(self.models, X)

    def predict_scores(self, X):
        return vote_scores(self.models, X)


def _stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    fold_of = np.empty(y.shape[0], dtype=int)
    rng = rng_from(seed)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = np.arange(idx.size) % k
    return fold_of


class StackingClassifier:
    """Out-of-fold base-model scores feed a meta-learner.

    Meta features for row i always come from base models whose training
    fold excluded i; the bases are refit on the full training data for
    inference. Fold provenance is kept so leakage can be audited.
    """

    def __init__(self, base_factories, meta_factory, folds=5, seed=0):
        self.base_factories = list(base_factories)
        self.meta_factory = meta_factory
        self.folds = folds
        self.seed = seed
        self.base_models = []
        self.meta = None
        self.n_classes = 0
        self.fold_of_row = None
        self.fold_train_rows: dict[int, np.ndarray] = {}

    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes if n_classes is not None else int(y.max()) + 1
        n = X.shape[0]
        self.fold_of_row = _stratified_folds(y, self.folds, self.seed)
        oof = np.zeros((n, len(self.base_factories) * self.n_classes))
        self.fold_train_rows = {}
        for f in range(self.folds):
            val = np.flatnonzero(self.fold_of_row == f)
            train = np.flatnonzero(self.fold_of_row != f)
            self.fold_train_rows[f] = train
            for b, factory in enumerate(self.base_factories):
                model = factory(self.seed + b)
                model.fit(X[train], y[train], self.n_classes)
                oof[val, b * self.n_classes:(b + 1) * self.n_classes] = \
                    model.predict_scores(X[val])
        self.meta = self.meta_factory(self.seed)
        self.meta.fit(oof, y, self.n_classes)
        self.base_models = []
        for b, factory in enumerate(self.base_factories):
            model = factory(self.seed + b)
            model.fit(X, y, self.n_classes)
            self.base_models.append(model)
        return self

    def _meta_features(self, X):
        return np.hstack([m.predict_scores(X) for m in self.base_models])

    def predict_scores(self, X):
        return self.meta.predict_scores(self._meta_features(X))

    def predict(self, X):
        return scores_to_labels(self.predict_scores(X))

    def leakage_audit(self) -> bool:
        """True iff every row's meta features came from models that never
        saw that row during the out-of-fold pass."""
        for f, train in self.fold_train_rows.items():
            fold_rows = np.flatnonzero(self.fold_of_row == f)
            if np.intersect1d(fold_rows, train).size:
                return False
        return True

    def provenance_fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.fold_of_row.tobytes())
        for f in sorted(self.fold_train_rows):
            h.update(self.fold_train_rows[f].tobytes())
        return h.hexdigest()[:16]
