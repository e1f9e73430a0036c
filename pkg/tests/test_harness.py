import numpy as np
import pytest

from harmonylab import harness
from harmonylab.harness import (
    ExperimentReport, FeatureBundle, GridConfig, average_variance_rows,
    bovw_class_histograms, make_split, render_report, run_grid,
)


def planted_bundle(n=160, seed=0, noise=0.0, n_hc=70):
    """Synthetic handcrafted block and labels tied to a linear signal."""
    rng = np.random.default_rng(seed)
    hc = rng.normal(size=(n, n_hc)) * rng.uniform(0.5, 2.0, size=n_hc)
    w = np.zeros(n_hc)
    w[:5] = [1.0, -0.8, 0.6, 0.5, -0.4]
    score = (hc - hc.mean(0)) / hc.std(0) @ w + noise * rng.normal(size=n)
    labels = np.where(score > np.median(score), 2, 0)  # Good vs Bad
    bundle = FeatureBundle(
        ids=[f"c{i}" for i in range(n)],
        handcrafted=hc,
        hc_names=[f"hc{i}" for i in range(n_hc)],
    )
    return bundle, labels


class TestMakeSplit:
    def test_sizes_and_disjoint(self):
        labels = np.array([0] * 70 + [1] * 30)
        split = make_split(labels, seed=0)
        assert np.intersect1d(split.train_idx, split.test_idx).size == 0
        assert split.train_idx.size + split.test_idx.size == 100
        assert split.train_idx.size == 70

    def test_fold_sizes_balanced(self):
        labels = np.array([0] * 60 + [1] * 40)
        split = make_split(labels, seed=1, n_folds=10)
        sizes = np.bincount(split.fold_of[split.fold_of >= 0], minlength=10)
        assert sizes.max() - sizes.min() <= 2  # two strata, each within 1

    def test_fold_stratification(self):
        labels = np.array([0] * 100 + [1] * 50)
        split = make_split(labels, seed=2, n_folds=5)
        for f in range(5):
            fold_rows = np.flatnonzero(split.fold_of == f)
            ones = (labels[fold_rows] == 1).sum()
            assert abs(ones - 50 * 0.7 / 5) <= 1

    def test_deterministic(self):
        labels = np.array([0, 1] * 40)
        a, b = make_split(labels, seed=5), make_split(labels, seed=5)
        assert np.array_equal(a.train_idx, b.train_idx)
        assert np.array_equal(a.fold_of, b.fold_of)


class TestRunGrid:
    def grid_cfg(self, models=("ridge", "majority"), seed=0):
        return GridConfig(setups=("BG",), variants=("d3",), models=models,
                          n_folds=5, seed=seed)

    def test_linear_models_recover_planted_signal(self):
        bundle, labels = planted_bundle(n=600, seed=0)
        report = run_grid(bundle, labels, self.grid_cfg(models=("ridge", "logreg")))
        means = [report.cell("BG", "d3", m).mean for m in ("ridge", "logreg")]
        assert max(means) >= 0.9
        assert min(means) >= 0.8

    def test_majority_model_scores_class_prior(self):
        rng = np.random.default_rng(3)
        bundle, labels = planted_bundle(n=150, seed=3)
        labels = np.where(rng.random(150) < 0.7, 0, 2)  # unbalanced, featureless
        report = run_grid(bundle, labels, self.grid_cfg())
        prior = max((labels == 0).mean(), (labels == 2).mean())
        assert abs(report.cell("BG", "d3", "majority").mean - prior) < 0.12

    def test_report_row_count(self):
        bundle, labels = planted_bundle(n=120, seed=4)
        cfg = GridConfig(setups=("BG",), variants=("d3",),
                         models=("ridge", "tree", "majority"), n_folds=4, seed=1)
        report = run_grid(bundle, labels, cfg)
        assert len(report.cells) == 1 * 1 * 3

    def test_selected_model_has_test_accuracy(self):
        bundle, labels = planted_bundle(n=120, seed=5)
        report = run_grid(bundle, labels, self.grid_cfg())
        block = [c for c in report.cells if c.test_accuracy is not None]
        assert len(block) == 1
        assert block[0].model == "ridge"

    def test_empty_class_raises(self):
        bundle, labels = planted_bundle(n=60, seed=6)
        with pytest.raises(harness.GridError):
            run_grid(bundle, np.zeros(60, dtype=int), self.grid_cfg())

    def test_reproducible_byte_identical(self):
        bundle, labels = planted_bundle(n=100, seed=7)
        cfg = self.grid_cfg(seed=9)
        a = run_grid(bundle, labels, cfg).to_json()
        b = run_grid(bundle, labels, cfg).to_json()
        assert a == b

    def test_fold_fingerprints_recorded(self):
        bundle, labels = planted_bundle(n=100, seed=8)
        report = run_grid(bundle, labels, self.grid_cfg())
        for cell in report.cells:
            assert len(cell.fold_fingerprints) == 5
            assert all("plan=" in fp and "projection=" in fp
                       for fp in cell.fold_fingerprints)
        # different folds fit different artifacts
        assert len(set(report.cells[0].fold_fingerprints)) > 1


class TestReportIO:
    def make_report(self):
        bundle, labels = planted_bundle(n=100, seed=10)
        cfg = GridConfig(setups=("BG",), variants=("d3",),
                         models=("ridge", "majority"), n_folds=4, seed=2)
        return run_grid(bundle, labels, cfg)

    def test_json_round_trip(self):
        report = self.make_report()
        clone = ExperimentReport.from_json(report.to_json())
        assert clone.to_json() == report.to_json()

    def test_csv_round_trip(self):
        report = self.make_report()
        clone = ExperimentReport.from_csv(report.to_csv(), report.config_fingerprint,
                                          report.seed)
        assert clone.to_csv() == report.to_csv()
        assert clone.to_json() == report.to_json()

    def test_render_marks_best_cell(self):
        report = self.make_report()
        text = render_report(report)
        assert "*" in text
        assert "ridge" in text

    def test_average_variance_rows(self):
        report = self.make_report()
        rows = average_variance_rows(report)
        assert ("BG", "single", pytest.approx(
            report.cell("BG", "d3", "ridge").variance)) in [
            (s, c, v) for s, c, v in rows if c == "single"]

    def test_bovw_class_histograms_shape(self):
        rng = np.random.default_rng(11)
        ks = (5, 10)
        hist = rng.integers(0, 10, size=(40, 15)).astype(float)
        ratings = rng.integers(1, 6, size=40)
        per_class = bovw_class_histograms(hist, ratings, k=10, ks=ks)
        for c, row in per_class.items():
            assert row.shape == (10,)
        assert set(per_class) == set(np.unique(ratings).tolist())
