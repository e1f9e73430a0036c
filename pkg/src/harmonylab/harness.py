"""Experiment grid: training setups x dataset variants x model families,
with stratified 70/30 split, stratified 10-fold cross-validation on the
training part, fold-level pipeline fitting (no leakage) and a Table-style
report with per-cell accuracy mean and population variance.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import pipeline as pl
from .bovw import BOVW_KS
from .learn import make_model, tune_hyperparams
from .targets import CLASS_LABELS

SETUPS: dict[str, tuple[str, ...]] = {
    "BN": ("Bad", "Neutral"),
    "BG": ("Bad", "Good"),
    "NG": ("Neutral", "Good"),
    "BNG": ("Bad", "Neutral", "Good"),
}

DEFAULT_MODELS = ("tree", "forest", "gb", "xgboost", "logreg", "ridge", "svm", "mlp")


class GridError(ValueError):
    pass


def _derive_seed(*parts) -> int:
    blob = ":".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


@dataclass
class Split:
    train_idx: np.ndarray
    test_idx: np.ndarray
    fold_of: np.ndarray     # fold id per row; -1 for test rows


def make_split(labels: np.ndarray, seed: int, train_frac: float = 0.7,
               n_folds: int = 10) -> Split:
    """Stratified train/test split plus stratified CV folds within train."""
    labels = np.asarray(labels, dtype=int)
    n = labels.shape[0]
    rng = np.random.Generator(np.random.PCG64(seed))
    train_mask = np.zeros(n, dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_train = int(round(train_frac * idx.size))
        train_mask[idx[:n_train]] = True
    fold_of = np.full(n, -1, dtype=int)
    for c in np.unique(labels):
        idx = np.flatnonzero((labels == c) & train_mask)
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = np.arange(idx.size) % n_folds
    return Split(np.flatnonzero(train_mask), np.flatnonzero(~train_mask), fold_of)


@dataclass
class FeatureBundle:
    """Raw per-composition artifacts the grid consumes.

    handcrafted is always required; ae codes are needed for d1/d2 and
    descriptor sets for d1. All are untransformed: every fold fits its
    own transforms, projections and codebooks on its training rows.
    """

    ids: list[str]
    handcrafted: np.ndarray
    hc_names: list[str]
    ae: np.ndarray | None = None
    descriptors: list[np.ndarray] | None = None

    def subset(self, idx: np.ndarray) -> "FeatureBundle":
        return FeatureBundle(
            ids=[self.ids[i] for i in idx],
            handcrafted=self.handcrafted[idx],
            hc_names=self.hc_names,
            ae=self.ae[idx] if self.ae is not None else None,
            descriptors=[self.descriptors[i] for i in idx]
            if self.descriptors is not None else None,
        )


@dataclass
class GridConfig:
    setups: tuple[str, ...] = ("BN", "BG", "NG", "BNG")
    variants: tuple[str, ...] = ("d1", "d2", "d3")
    models: tuple[str, ...] = DEFAULT_MODELS
    n_folds: int = 10
    seed: int = 0
    ks: tuple[int, ...] = BOVW_KS
    kmeans_iters: int = 100
    tune: bool = False
    model_hp: dict = field(default_factory=dict)

    def fingerprint(self) -> str:
        blob = json.dumps(
            {"setups": list(self.setups), "variants": list(self.variants),
             "models": list(self.models), "n_folds": self.n_folds, "seed": self.seed,
             "ks": list(self.ks), "kmeans_iters": self.kmeans_iters, "tune": self.tune,
             "model_hp": self.model_hp},
            sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class CellResult:
    setup: str
    dataset: str
    model: str
    fold_accuracies: list[float]
    mean: float
    variance: float
    test_accuracy: float | None = None          # filled for the selected model
    fold_fingerprints: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"setup": self.setup, "dataset": self.dataset, "model": self.model,
                "fold_accuracies": self.fold_accuracies, "mean": self.mean,
                "variance": self.variance, "test_accuracy": self.test_accuracy,
                "fold_fingerprints": self.fold_fingerprints}


@dataclass
class ExperimentReport:
    cells: list[CellResult]
    config_fingerprint: str
    seed: int

    def cell(self, setup: str, dataset: str, model: str) -> CellResult:
        for c in self.cells:
            if (c.setup, c.dataset, c.model) == (setup, dataset, model):
                return c
        raise KeyError((setup, dataset, model))

    def to_json(self) -> str:
        return json.dumps(
            {"config_fingerprint": self.config_fingerprint, "seed": self.seed,
             "cells": [c.to_dict() for c in self.cells]},
            sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        data = json.loads(text)
        cells = [CellResult(d["setup"], d["dataset"], d["model"], d["fold_accuracies"],
                            d["mean"], d["variance"], d["test_accuracy"],
                            d["fold_fingerprints"]) for d in data["cells"]]
        return cls(cells, data["config_fingerprint"], data["seed"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["setup", "dataset", "model", "mean", "variance",
                         "test_accuracy", "fold_accuracies", "fold_fingerprints"])
        for c in self.cells:
            writer.writerow([c.setup, c.dataset, c.model, repr(c.mean), repr(c.variance),
                             "" if c.test_accuracy is None else repr(c.test_accuracy),
                             "|".join(repr(a) for a in c.fold_accuracies),
                             "|".join(c.fold_fingerprints)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, config_fingerprint: str = "", seed: int = 0):
        reader = csv.reader(io.StringIO(text))
        next(reader)
        cells = []
        for row in reader:
            setup, dataset, model, mean, var, test_acc, folds, fps = row
            cells.append(CellResult(
                setup, dataset, model,
                [float(v) for v in folds.split("|") if v],
                float(mean), float(var),
                None if test_acc == "" else float(test_acc),
                fps.split("|") if fps else []))
        return cls(cells, config_fingerprint, seed)


def _remap_labels(labels: np.ndarray, setup: str) -> tuple[np.ndarray, np.ndarray]:
    """Row filter + relabeling for one training setup."""
    wanted = [CLASS_LABELS.index(name) for name in SETUPS[setup]]
    mask = np.isin(labels, wanted)
    remap = {orig: i for i, orig in enumerate(wanted)}
    sub = np.array([remap[v] for v in labels[mask]], dtype=int)
    return np.flatnonzero(mask), sub


def run_grid(bundle: FeatureBundle, labels: np.ndarray, cfg: GridConfig) -> ExperimentReport:
    """Cross-validated accuracy for every (setup, dataset, model) cell.

    Per fold, the entire preprocessing stack is refit on the fold's
    training rows; the per-fold artifact fingerprints land in the report
    so leakage can be audited. After CV the best-mean model per
    (setup, dataset) is refit on the full training split and scored on
    the held-out test rows.
    """
    labels = np.asarray(labels, dtype=int)
    cells: list[CellResult] = []
    for setup in cfg.setups:
        rows, y = _remap_labels(labels, setup)
        if np.unique(y).size < len(SETUPS[setup]):
            raise GridError(f"setup {setup}: a class has no rows after filtering")
        sub_bundle = bundle.subset(rows)
        n_classes = len(SETUPS[setup])
        split = make_split(y, _derive_seed(cfg.seed, setup), n_folds=cfg.n_folds)
        for variant in cfg.variants:
            fold_matrices = []
            fold_fps = []
            for f in range(cfg.n_folds):
                train_rows = np.flatnonzero((split.fold_of >= 0) & (split.fold_of != f))
                fitted = pl.fit_fold_pipeline(
                    sub_bundle.handcrafted, sub_bundle.hc_names, train_rows, variant,
                    ae_block=sub_bundle.ae, descriptor_sets=sub_bundle.descriptors,
                    ks=cfg.ks, seed=_derive_seed(cfg.seed, setup, variant, f),
                    kmeans_iters=cfg.kmeans_iters)
                fold_matrices.append(fitted.matrix.values)
                fold_fps.append("+".join(f"{k}={v}" for k, v in
                                         sorted(fitted.fingerprints.items())))
            per_model_acc: dict[str, list[float]] = {m: [] for m in cfg.models}
            for f in range(cfg.n_folds):
                train_rows = np.flatnonzero((split.fold_of >= 0) & (split.fold_of != f))
                val_rows = np.flatnonzero(split.fold_of == f)
                X = fold_matrices[f]
                for model_name in cfg.models:
                    hp = dict(cfg.model_hp.get(model_name, {}))
                    if cfg.tune:
                        hp.update(tune_hyperparams(
                            model_name, X[train_rows], y[train_rows], n_classes,
                            _derive_seed(cfg.seed, setup, variant, model_name, f)))
                    model = make_model(model_name, hp,
                                       seed=_derive_seed(cfg.seed, setup, variant,
                                                         model_name, f))
                    model.fit(X[train_rows], y[train_rows], n_classes)
                    acc = float((model.predict(X[val_rows]) == y[val_rows]).mean())
                    per_model_acc[model_name].append(acc)
            for model_name in cfg.models:
                accs = per_model_acc[model_name]
                cells.append(CellResult(
                    setup, variant, model_name, accs,
                    float(np.mean(accs)), float(np.var(accs)), None, fold_fps))
            # held-out test accuracy for the best-mean model of this block
            block = [c for c in cells if c.setup == setup and c.dataset == variant]
            best = max(block, key=lambda c: (c.mean, -cfg.models.index(c.model)))
            fitted = pl.fit_fold_pipeline(
                sub_bundle.handcrafted, sub_bundle.hc_names, split.train_idx, variant,
                ae_block=sub_bundle.ae, descriptor_sets=sub_bundle.descriptors,
                ks=cfg.ks, seed=_derive_seed(cfg.seed, setup, variant, "final"),
                kmeans_iters=cfg.kmeans_iters)
            X = fitted.matrix.values
            hp = dict(cfg.model_hp.get(best.model, {}))
            model = make_model(best.model, hp,
                               seed=_derive_seed(cfg.seed, setup, variant, best.model,
                                                 "final"))
            model.fit(X[split.train_idx], y[split.train_idx], n_classes)
            best.test_accuracy = float(
                (model.predict(X[split.test_idx]) == y[split.test_idx]).mean())
    return ExperimentReport(cells, cfg.fingerprint(), cfg.seed)


# ---------------------------------------------------------------------------
# reporting

def render_report(report: ExperimentReport) -> str:
    """Text table: per (setup, dataset) the best single model, the voting
    ensemble and the stacking columns, best mean per setup starred."""
    singles = [m for m in {c.model for c in report.cells} if m not in ("vote", "stack")]
    lines = []
    header = f"{'setup':>5} {'data':>5} | {'single model':>22} {'var':>7} | " \
             f"{'ensemble':>9} {'var':>7} | {'stacking':>9} {'var':>7} | {'test':>6}"
    lines.append(header)
    lines.append("-" * len(header))
    setups = sorted({c.setup for c in report.cells}, key=list(SETUPS).index)
    for setup in setups:
        block = [c for c in report.cells if c.setup == setup]
        best_mean = max(c.mean for c in block)
        for dataset in sorted({c.dataset for c in block}):
            row = [c for c in block if c.dataset == dataset]
            best_single = max((c for c in row if c.model in singles),
                              key=lambda c: c.mean, default=None)
            vote_cell = next((c for c in row if c.model == "vote"), None)
            stack_cell = next((c for c in row if c.model == "stack"), None)

            def fmt(cell, with_name=False):
                if cell is None:
                    return " " * (22 if with_name else 9), " " * 7
                star = "*" if cell.mean == best_mean else " "
                label = f"{cell.mean:.2f} ({cell.model}){star}" if with_name \
                    else f"{cell.mean:.2f}{star}"
                width = 22 if with_name else 9
                return f"{label:>{width}}", f"{cell.variance:.3f}"
            s, sv = fmt(best_single, with_name=True)
            v, vv = fmt(vote_cell)
            k, kv = fmt(stack_cell)
            test = next((c.test_accuracy for c in row if c.test_accuracy is not None), None)
            test_s = f"{test:.2f}" if test is not None else "-"
            lines.append(f"{setup:>5} {dataset:>5} | {s} {sv:>7} | {v} {vv:>7} | "
                         f"{k} {kv:>7} | {test_s:>6}")
    return "\n".join(lines) + "\n"


def average_variance_rows(report: ExperimentReport) -> list[tuple[str, str, float]]:
    """Average accuracy variance per setup for the best-single / vote /
    stack categories (chart data)."""
    rows = []
    singles = [m for m in {c.model for c in report.cells} if m not in ("vote", "stack")]
    for setup in sorted({c.setup for c in report.cells}, key=list(SETUPS).index):
        block = [c for c in report.cells if c.setup == setup]
        datasets = sorted({c.dataset for c in block})
        for category in ("single", "vote", "stack"):
            variances = []
            for dataset in datasets:
                row = [c for c in block if c.dataset == dataset]
                if category == "single":
                    cell = max((c for c in row if c.model in singles),
                               key=lambda c: c.mean, default=None)
                else:
                    cell = next((c for c in row if c.model == category), None)
                if cell is not None:
                    variances.append(cell.variance)
            if variances:
                rows.append((setup, category, float(np.mean(variances))))
    return rows


def bovw_class_histograms(histograms: np.ndarray, ratings: np.ndarray,
                          k: int, ks=BOVW_KS) -> dict[int, np.ndarray]:
    """Mean codeword histogram per original rating class for one codebook
    size (chart data: k bars per class)."""
    if k not in ks:
        raise ValueError(f"k={k} not among {ks}")
    offset = sum(kk for kk in ks if kk < k)
    block = histograms[:, offset:offset + k]
    out = {}
    for c in sorted(np.unique(ratings)):
        out[int(c)] = block[ratings == c].mean(axis=0)
    return out
