"""Classifier suite: trees, forests, gradient boosting, linear models,
SVM, MLP, plus naive voting and stacked generalization.

MODEL_FAMILIES maps a family name to a factory taking (hyperparams, seed);
DEFAULTS and GRIDS document the shipped settings and the tuning grid
searched on an inner validation split when tuning is requested.
"""
from __future__ import annotations

import numpy as np

from .base import LabeledDataset, OneVsRest, rng_from, scores_to_labels, softmax
from .boosting import GradientBoostingClassifier
from .ensemble import StackingClassifier, VotingEnsemble, vote
from .linear import LogisticRegressionGD, RidgeClassifier
from .mlp import MLPClassifier
from .svm import SVMClassifier
from .tree import DecisionTreeClassifier, RandomForestClassifier, RegressionTree


class MajorityClassifier:
    """Baseline: always the most common training class (lowest index on ties)."""

    def __init__(self):
        self.n_classes = 0
        self.counts = None

    def fit(self, X, y, n_classes=None):
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes if n_classes is not None else int(y.max()) + 1
        self.counts = np.bincount(y, minlength=self.n_classes).astype(float)
        return self

    def predict_scores(self, X):
        return np.tile(self.counts / self.counts.sum(), (np.asarray(X).shape[0], 1))

    def predict(self, X):
        return scores_to_labels(self.predict_scores(X))


DEFAULTS: dict[str, dict] = {
    "majority": {},
    "tree": {"max_depth": 12, "min_leaf": 2},
    "forest": {"n_trees": 30, "max_depth": 12, "min_leaf": 2, "max_features": "sqrt"},
    "gb": {"n_rounds": 40, "learning_rate": 0.1, "max_depth": 3, "l2_leaf": 0.0},
    "xgboost": {"n_rounds": 40, "learning_rate": 0.3, "max_depth": 3, "l2_leaf": 1.0},
    "logreg": {"l2": 1e-2, "tol": 1e-6, "max_iter": 3000},
    "ridge": {"alpha": 1.0},
    "svm": {"C": 1.0, "kernel": "linear", "tol": 1e-3, "max_passes": 3, "max_iter": 4000},
    "mlp": {"hidden": (32,), "lr": 0.05, "epochs": 30, "batch_size": 32},
    "vote": {},
    "stack": {"folds": 5},
}

GRIDS: dict[str, list[dict]] = {
    "majority": [{}],
    "tree": [{"max_depth": d} for d in (4, 8, 12, None)],
    "forest": [{"n_trees": n, "max_depth": 12} for n in (20, 50)],
    "gb": [{"n_rounds": r, "learning_rate": lr} for r in (40, 80) for lr in (0.05, 0.1)],
    "xgboost": [{"n_rounds": 40, "learning_rate": 0.3, "l2_leaf": l} for l in (0.5, 1.0, 3.0)],
    "logreg": [{"l2": l} for l in (1e-3, 1e-2, 1e-1)],
    "ridge": [{"alpha": a} for a in (0.1, 1.0, 10.0)],
    "svm": [{"C": c, "kernel": k} for c in (0.3, 1.0, 3.0) for k in ("linear", "rbf")],
    "mlp": [{"hidden": h} for h in ((16,), (32,), (32, 16))],
    "vote": [{}],
    "stack": [{}],
}

BASE_FAMILIES = ("tree", "forest", "gb", "xgboost", "logreg", "ridge", "svm", "mlp")


def make_model(family: str, hp: dict | None = None, seed: int = 0):
    hp = {**DEFAULTS.get(family, {}), **(hp or {})}
    if family == "majority":
        return MajorityClassifier()
    if family == "tree":
        return DecisionTreeClassifier(seed=seed, **hp)
    if family == "forest":
        return RandomForestClassifier(seed=seed, **hp)
    if family in ("gb", "xgboost"):
        return GradientBoostingClassifier(seed=seed, **hp)
    if family == "logreg":
        return LogisticRegressionGD(**hp)
    if family == "ridge":
        return RidgeClassifier(**hp)
    if family == "svm":
        return SVMClassifier(seed=seed, **hp)
    if family == "mlp":
        return MLPClassifier(seed=seed, **hp)
    if family == "vote":
        members = hp.get("members", BASE_FAMILIES)
        return VotingEnsemble([_family_factory(m) for m in members], seed=seed)
    if family == "stack":
        members = hp.get("members", BASE_FAMILIES)
        meta = hp.get("meta", "logreg")
        return StackingClassifier([_family_factory(m) for m in members],
                                  _family_factory(meta), folds=hp.get("folds", 5), seed=seed)
    raise ValueError(f"unknown model family {family!r}")


def _family_factory(family: str):
    return lambda seed: make_model(family, seed=seed)


MODEL_FAMILIES = tuple(DEFAULTS)


def tune_hyperparams(family: str, X, y, n_classes: int, seed: int,
                     val_frac: float = 0.2) -> dict:
    """Pick the grid entry with the best inner-validation accuracy."""
    grid = GRIDS.get(family, [{}])
    if len(grid) <= 1:
        return grid[0] if grid else {}
    y = np.asarray(y, dtype=int)
    rng = rng_from(seed)
    idx = rng.permutation(len(y))
    n_val = max(1, int(val_frac * len(y)))
    val, train = idx[:n_val], idx[n_val:]
    best_hp, best_acc = grid[0], -1.0
    for hp in grid:
        model = make_model(family, hp, seed=seed)
        model.fit(np.asarray(X)[train], y[train], n_classes)
        acc = float((model.predict(np.asarray(X)[val]) == y[val]).mean())
        if acc > best_acc:
            best_hp, best_acc = hp, acc
    return best_hp


# ---------------------------------------------------------------------------
# serialization (versioned, one schema per family)

def model_to_dict(model) -> dict:
    if isinstance(model, MajorityClassifier):
        return {"family": "majority", "version": 1, "n_classes": model.n_classes,
                "counts": model.counts.tolist()}
    if isinstance(model, DecisionTreeClassifier):
        return model.to_dict()
    if isinstance(model, RandomForestClassifier):
        return model.to_dict()
    if isinstance(model, GradientBoostingClassifier):
        trees = model.trees if model.n_classes == 2 else [t for rnd in model.trees for t in rnd]
        return {"family": "gb", "version": 1, "n_classes": model.n_classes,
                "learning_rate": model.learning_rate,
                "init_score": model.init_score.tolist(),
                "trees": [t.root.to_dict() for t in trees]}
    if isinstance(model, LogisticRegressionGD):
        impls = [model.impl] if model.n_classes == 2 else model.impl.models
        return {"family": "logreg", "version": 1, "n_classes": model.n_classes,
                "weights": [m.w.tolist() for m in impls],
                "intercepts": [m.b for m in impls]}
    if isinstance(model, RidgeClassifier):
        return {"family": "ridge", "version": 1, "n_classes": model.n_classes,
                "W": model.W.tolist(), "b": model.b.tolist()}
    if isinstance(model, SVMClassifier):
        impls = [model.impl] if model.n_classes == 2 else model.impl.models
        return {"family": "svm", "version": 1, "n_classes": model.n_classes,
                "params": {k: v for k, v in model.params.items() if k != "seed"},
                "machines": [{"alphas": m.alphas.tolist(), "b": m.b,
                              "X": m.X.tolist(), "y": m.y.tolist()} for m in impls]}
    if isinstance(model, MLPClassifier):
        return {"family": "mlp", "version": 1, "n_classes": model.n_classes,
                "hidden": list(model.hidden),
                "params": {k: v.tolist() for k, v in model.params.items()}}
    if isinstance(model, VotingEnsemble):
        return {"family": "vote", "version": 1, "n_classes": model.n_classes,
                "members": [model_to_dict(m) for m in model.models]}
    if isinstance(model, StackingClassifier):
        return {"family": "stack", "version": 1, "n_classes": model.n_classes,
                "bases": [model_to_dict(m) for m in model.base_models],
                "meta": model_to_dict(model.meta)}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(data: dict):
    family = data["family"]
    if data.get("version") != 1:
        raise ValueError(f"unsupported model file version {data.get('version')}")
    if family == "majority":
        model = MajorityClassifier()
        model.n_classes = data["n_classes"]
        model.counts = np.asarray(data["counts"], dtype=float)
        return model
    if family == "tree":
        return DecisionTreeClassifier.from_dict(data)
    if family == "forest":
        return RandomForestClassifier.from_dict(data)
    if family == "gb":
        from .tree import _Node
        model = GradientBoostingClassifier(learning_rate=data["learning_rate"])
        model.n_classes = data["n_classes"]
        model.init_score = np.asarray(data["init_score"], dtype=float)
        trees = []
        for tdata in data["trees"]:
            tree = RegressionTree()
            tree.root = _Node.from_dict(tdata)
            trees.append(tree)
        if model.n_classes == 2:
            model.trees = trees
        else:
            k = model.n_classes
            model.trees = [trees[i:i + k] for i in range(0, len(trees), k)]
        return model
    if family == "logreg":
        from .linear import _BinaryLogistic
        model = LogisticRegressionGD()
        model.n_classes = data["n_classes"]
        impls = []
        for w, b in zip(data["weights"], data["intercepts"]):
            impl = _BinaryLogistic()
            impl.w = np.asarray(w, dtype=float)
            impl.b = float(b)
            impls.append(impl)
        if model.n_classes == 2:
            model.impl = impls[0]
        else:
            ovr = OneVsRest(lambda: None, model.n_classes)
            ovr.models = impls
            model.impl = ovr
        return model
    if family == "ridge":
        model = RidgeClassifier()
        model.n_classes = data["n_classes"]
        model.W = np.asarray(data["W"], dtype=float)
        model.b = np.asarray(data["b"], dtype=float)
        return model
    if family == "svm":
        from .svm import _BinarySVM
        model = SVMClassifier(**data["params"])
        model.n_classes = data["n_classes"]
        impls = []
        for m in data["machines"]:
            impl = _BinarySVM(**data["params"])
            impl.alphas = np.asarray(m["alphas"], dtype=float)
            impl.b = float(m["b"])
            impl.X = np.asarray(m["X"], dtype=float)
            impl.y = np.asarray(m["y"], dtype=float)
            impls.append(impl)
        if model.n_classes == 2:
            model.impl = impls[0]
        else:
            ovr = OneVsRest(lambda: None, model.n_classes)
            ovr.models = impls
            model.impl = ovr
        return model
    if family == "mlp":
        model = MLPClassifier(hidden=tuple(data["hidden"]))
        model.n_classes = data["n_classes"]
        model.params = {k: np.asarray(v, dtype=float) for k, v in data["params"].items()}
        return model
    if family == "vote":
        model = VotingEnsemble([])
        model.n_classes = data["n_classes"]
        model.models = [model_from_dict(m) for m in data["members"]]
        return model
    if family == "stack":
        model = StackingClassifier([], None)
        model.n_classes = data["n_classes"]
        model.base_models = [model_from_dict(m) for m in data["bases"]]
        model.meta = model_from_dict(data["meta"])
        return model
    raise ValueError(f"unknown model family {family!r}")
