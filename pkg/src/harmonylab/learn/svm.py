"""Soft-margin SVM trained with sequential minimal optimization.

Binary SMO in the simplified Platt form (random second index, analytic
pair update, b from the KKT-consistent bound averages); linear and RBF
kernels. The dual objective is recorded once per sweep and is
non-decreasing; a KKT report is available for verification. Multiclass
goes one-vs-rest.
"""
from __future__ import annotations

import numpy as np

from .base import OneVsRest, rng_from, scores_to_labels, softmax


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        d2 = ((A ** 2).sum(1)[:, None] + (B ** 2).sum(1)[None, :] - 2.0 * A @ B.T)
        return np.exp(-gamma * np.maximum(d2, 0.0))
    raise ValueError(f"unknown kernel {kernel!r}")


class _BinarySVM:
    def __init__(self, C=1.0, kernel="linear", gamma=None, tol=1e-3,
                 max_passes=10, max_iter=10_000, seed=0):
        self.C = C
        self.kernel = kernel
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes
        self.max_iter = max_iter
        self.seed = seed
        self.alphas = None
        self.b = 0.0
        self.X = None
        self.y = None
        self.dual_trace: list[float] = []

    def _gamma(self, d: int) -> float:
        return self.gamma if self.gamma is not None else 1.0 / d

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = X.shape[0]
        K = kernel_matrix(X, X, self.kernel, self._gamma(X.shape[1]))
        alphas = np.zeros(n)
        b = 0.0
        rng = rng_from(self.seed)
        self.dual_trace = []
        passes = it = 0
        while passes < self.max_passes and it < self.max_iter:
            changed = 0
            coef = alphas * y
            for i in range(n):
                Ei = coef @ K[:, i] + b - y[i]
                if (y[i] * Ei < -self.tol and alphas[i] < self.C) or \
                   (y[i] * Ei > self.tol and alphas[i] > 0):
                    j = int(rng.integers(n - 1))
                    if j >= i:
                        j += 1
                    Ej = coef @ K[:, j] + b - y[j]
                    ai_old, aj_old = alphas[i], alphas[j]
                    if y[i] != y[j]:
                        L, H = max(0.0, aj_old - ai_old), min(self.C, self.C + aj_old - ai_old)
                    else:
                        L, H = max(0.0, ai_old + aj_old - self.C), min(self.C, ai_old + aj_old)
                    if L >= H:
                        continue
                    eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
                    if eta >= 0:
                        continue
                    aj = aj_old - y[j] * (Ei - Ej) / eta
                    aj = min(H, max(L, aj))
                    if abs(aj - aj_old) < 1e-7:
                        continue
                    ai = ai_old + y[i] * y[j] * (aj_old - aj)
                    b1 = b - Ei - y[i] * (ai - ai_old) * K[i, i] - y[j] * (aj - aj_old) * K[i, j]
                    b2 = b - Ej - y[i] * (ai - ai_old) * K[i, j] - y[j] * (aj - aj_old) * K[j, j]
                    if 0 < ai < self.C:
                        b = b1
                    elif 0 < aj < self.C:
                        b = b2
                    else:
                        b = 0.5 * (b1 + b2)
                    alphas[i], alphas[j] = ai, aj
                    coef = alphas * y
                    changed += 1
                    it += 1
            passes = passes + 1 if changed == 0 else 0
            self.dual_trace.append(float(alphas.sum() - 0.5 * coef @ K @ coef))
        self.alphas, self.b, self.X, self.y = alphas, b, X, y
        return self

    def decision_function(self, X):
        K = kernel_matrix(np.asarray(X, dtype=float), self.X, self.kernel,
                          self._gamma(self.X.shape[1]))
        return K @ (self.alphas * self.y) + self.b

    def kkt_violation(self) -> float:
        """Largest violation of the dual KKT conditions at the solution."""
        f = self.decision_function(self.X)
        margins = self.y * f
        violation = 0.0
        for a, m in zip(self.alphas, margins):
            if a <= 1e-8:
                violation = max(violation, 1.0 - m)
            elif a >= self.C - 1e-8:
                violation = max(violation, m - 1.0)
            else:
                violation = max(violation, abs(m - 1.0))
        return float(max(violation, 0.0))


class SVMClassifier:
    def __init__(self, C=1.0, kernel="linear", gamma=None, tol=1e-3,
                 max_passes=10, max_iter=10_000, seed=0):
        self.params = dict(C=C, kernel=kernel, gamma=gamma, tol=tol,
                           max_passes=max_passes, max_iter=max_iter, seed=seed)
        self.n_classes = 0
        self.impl = None

    def fit(self, X, y, n_classes=None):
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes if n_classes is not None else int(y.max()) + 1
        if self.n_classes == 2:
            self.impl = _BinarySVM(**self.params)
            self.impl.fit(X, np.where(y == 1, 1.0, -1.0))
        else:
            self.impl = OneVsRest(lambda: _BinarySVM(**self.params), self.n_classes)
            self.impl.fit(np.asarray(X, dtype=float), y)
        return self

    def predict_scores(self, X):
        if self.n_classes == 2:
            f = self.impl.decision_function(X)
            return softmax(np.stack([-f, f], axis=1))
        return self.impl.predict_scores(X)

    def predict(self, X):
        return scores_to_labels(self.predict_scores(X))

    def dual_trace(self):
        if self.n_classes == 2:
            return self.impl.dual_trace
        return [m.dual_trace for m in self.impl.models]

    def kkt_violation(self):
        if self.n_classes == 2:
            return self.impl.kkt_violation()
        return max(m.kkt_violation() for m in self.impl.models)
