"""Logistic regression (gradient descent) and closed-form ridge classification."""
from __future__ import annotations

import numpy as np

from .base import OneVsRest, scores_to_labels, softmax


class _BinaryLogistic:
    """L2-regularized logistic regression on +/-1 labels, trained by plain
    gradient descent with a Lipschitz step size until the gradient norm
    drops below tol."""

    def __init__(self, l2=1e-2, tol=1e-6, max_iter=20_000):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter
        self.w = None
        self.b = 0.0
        self.grad_norm = np.inf

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, d = X.shape
        self.w = np.zeros(d)
        self.b = 0.0
        # Lipschitz constant of the logistic loss gradient (plus intercept column)
        sigma = np.linalg.norm(X, 2) if min(n, d) > 1 else np.linalg.norm(X)
        L = (sigma ** 2 + n) / (4.0 * n) + self.l2
        step = 1.0 / L
        for _ in range(self.max_iter):
            margin = y * (X @ self.w + self.b)
            s = 1.0 / (1.0 + np.exp(np.clip(margin, -500, 500)))
            gw = -(X.T @ (y * s)) / n + self.l2 * self.w
            gb = -np.mean(y * s)
            self.grad_norm = float(np.sqrt((gw ** 2).sum() + gb ** 2))
            if self.grad_norm < self.tol:
                break
            self.w -= step * gw
            self.b -= step * gb
        return self

    def decision_function(self, X):
        return np.asarray(X, dtype=float) @ self.w + self.b


class LogisticRegressionGD:
    def __init__(self, l2=1e-2, tol=1e-6, max_iter=20_000):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter
        self.n_classes = 0
        self.impl = None

    def fit(self, X, y, n_classes=None):
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes if n_classes is not None else int(y.max()) + 1
        if self.n_classes == 2:
            self.impl = _BinaryLogistic(self.l2, self.tol, self.max_iter)
            self.impl.fit(X, np.where(y == 1, 1.0, -1.0))
        else:
            self.impl = OneVsRest(
                lambda: _BinaryLogistic(self.l2, self.tol, self.max_iter), self.n_classes)
            self.impl.fit(np.asarray(X, dtype=float), y)
        return self

    def predict_scores(self, X):
        if self.n_classes == 2:
            p = 1.0 / (1.0 + np.exp(-np.clip(self.impl.decision_function(X), -500, 500)))
            return np.stack([1 - p, p], axis=1)
        return self.impl.predict_scores(X)

    def predict(self, X):
        return scores_to_labels(self.predict_scores(X))

    @property
    def gradient_norm(self):
        if isinstance(self.impl, _BinaryLogistic):
            return self.impl.grad_norm
        return max(m.grad_norm for m in self.impl.models)


class RidgeClassifier:
    """Regularized least squares on +/-1 targets with an unpenalized
    intercept; as alpha grows the weights vanish and the intercept alone
    predicts the majority class."""

    def __init__(self, alpha=1.0):
        self.alpha = alpha
        self.W = None
        self.b = None
        self.n_classes = 0

    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes if n_classes is not None else int(y.max()) + 1
        targets = np.where(np.eye(self.n_classes)[y] > 0, 1.0, -1.0)
        x_mean = X.mean(axis=0)
        t_mean = targets.mean(axis=0)
        Xc = X - x_mean
        d = X.shape[1]
        self.W = np.linalg.solve(Xc.T @ Xc + self.alpha * np.eye(d),
                                 Xc.T @ (targets - t_mean))
        self.b = t_mean - x_mean @ self.W
        return self

    def decision_matrix(self, X):
        return np.asarray(X, dtype=float) @ self.W + self.b

    def predict_scores(self, X):
        return softmax(self.decision_matrix(X))

    def predict(self, X):
        return scores_to_labels(self.decision_matrix(X))
