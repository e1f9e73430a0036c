"""Shared bits for the classifier suite.

Every model exposes fit(X, y) / predict(X) / predict_scores(X). Labels
are integer class indices 0..c-1 (class order Bad < Neutral < Good);
scores are per-class, higher is better, and predict is always the argmax
of predict_scores with ties resolved toward the lowest class index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("row count must equal label count")
        if not np.isfinite(self.X).all():
            raise ValueError("feature matrix contains non-finite values")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError("labels outside 0..n_classes-1")


def scores_to_labels(scores: np.ndarray) -> np.ndarray:
    # np.argmax picks the first maximum: lowest class index on ties.
    return np.argmax(scores, axis=1)


def rng_from(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class OneVsRest:
    """Multiclass wrapper for binary margin models.

    Trains one binary model per class (class vs rest) and stacks the
    binary margins; scores are softmax-normalized margins so they are
    comparable across model families in vote tie-breaks.
    """

    def __init__(self, factory, n_classes: int):
        self.factory = factory
        self.n_classes = n_classes
        self.models = []

    def fit(self, X: np.ndarray, y: np.ndarray):
        self.models = []
        for c in range(self.n_classes):
            model = self.factory()
            model.fit(X, np.where(y == c, 1, -1))
            self.models.append(model)
        return self

    def decision_matrix(self, X: np.ndarray) -> np.ndarray:
        return np.stack([m.decision_function(X) for m in self.models], axis=1)

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.decision_matrix(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return scores_to_labels(self.predict_scores(X))
