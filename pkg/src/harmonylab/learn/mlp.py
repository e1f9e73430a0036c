"""Feed-forward network: tanh hidden layers, softmax cross-entropy output,
minibatch SGD with momentum. Gradients are analytic and checkable against
finite differences."""
from __future__ import annotations

import numpy as np

from .base import rng_from, scores_to_labels, softmax


class MLPClassifier:
    def __init__(self, hidden=(32,), lr=0.1, epochs=100, batch_size=32,
                 momentum=0.9, l2=1e-4, seed=0):
        self.hidden = tuple(hidden)
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.momentum = momentum
        self.l2 = l2
        self.seed = seed
        self.params: dict[str, np.ndarray] = {}
        self.n_classes = 0
        self.loss_history: list[float] = []

    def _init(self, d: int):
        rng = rng_from(self.seed)
        sizes = (d, *self.hidden, self.n_classes)
        self.params = {}
        for i in range(len(sizes) - 1):
            scale = np.sqrt(1.0 / sizes[i])
            self.params[f"W{i}"] = rng.normal(0.0, scale, size=(sizes[i], sizes[i + 1]))
            self.params[f"b{i}"] = np.zeros(sizes[i + 1])

    def _forward(self, X):
        acts = [X]
        n_layers = len(self.hidden) + 1
        for i in range(n_layers):
            z = acts[-1] @ self.params[f"W{i}"] + self.params[f"b{i}"]
            acts.append(np.tanh(z) if i < n_layers - 1 else z)
        return acts

    def loss_and_grads(self, X, y):
        """Cross-entropy (plus L2 on weights) and analytic gradients."""
        n = X.shape[0]
        acts = self._forward(X)
        probs = softmax(acts[-1])
        loss = float(-np.mean(np.log(np.clip(probs[np.arange(n), y], 1e-12, None))))
        n_layers = len(self.hidden) + 1
        for i in range(n_layers):
            loss += 0.5 * self.l2 * float((self.params[f"W{i}"] ** 2).sum())
        grads = {}
        delta = (probs - np.eye(self.n_classes)[y]) / n
        for i in range(n_layers - 1, -1, -1):
            grads[f"W{i}"] = acts[i].T @ delta + self.l2 * self.params[f"W{i}"]
            grads[f"b{i}"] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.params[f"W{i}"].T) * (1.0 - acts[i] ** 2)
        return loss, grads

    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes if n_classes is not None else int(y.max()) + 1
        self._init(X.shape[1])
        velocity = {k: np.zeros_like(v) for k, v in self.params.items()}
        rng = rng_from(self.seed + 1)
        self.loss_history = []
        for _ in range(self.epochs):
            order = rng.permutation(X.shape[0])
            losses = []
            for start in range(0, X.shape[0], self.batch_size):
                idx = order[start:start + self.batch_size]
                loss, grads = self.loss_and_grads(X[idx], y[idx])
                losses.append(loss)
                for key in self.params:
                    velocity[key] = self.momentum * velocity[key] - self.lr * grads[key]
                    self.params[key] += velocity[key]
            self.loss_history.append(float(np.mean(losses)))
        return self

    def predict_scores(self, X):
        return softmax(self._forward(np.asarray(X, dtype=float))[-1])

    def predict(self, X):
        return scores_to_labels(self.predict_scores(X))
