"""Feature polishing and dataset-variant assembly.

Per-column distribution-driven transforms (Box-Cox / log / sqrt), outlier
winsorization and z-normalization, all fitted on training rows only; the
polished handcrafted block is extended by its PCA (30 components) and
truncated-SVD (9 components) projections; finally columns are assembled
into the three ablation variants:

    d3 = handcrafted + projections
    d2 = d3 + autoencoder code
    d1 = d2 + bag-of-visual-words histograms
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import bovw as bovw_mod

VARIANTS = ("d1", "d2", "d3")
PCA_COMPONENTS = 30
SVD_COMPONENTS = 9
EPS = 1e-6
Z_CUTOFF = 4.0


@dataclass
class ColumnPlan:
    name: str
    transform: str                 # identity | boxcox | log | sqrt
    lam: float = 1.0               # boxcox exponent
    shift: float = 0.0             # added before boxcox/sqrt to keep support valid
    clamp: tuple[float, float] | None = None
    mean: float = 0.0
    std: float = 1.0


@dataclass
class TransformPlan:
    columns: list[ColumnPlan]
    version: str = "plan-v1"

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "columns": [
                {"name": c.name, "transform": c.transform, "lam": c.lam, "shift": c.shift,
                 "clamp": list(c.clamp) if c.clamp else None, "mean": c.mean, "std": c.std}
                for c in self.columns
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TransformPlan":
        cols = [ColumnPlan(d["name"], d["transform"], d["lam"], d["shift"],
                           tuple(d["clamp"]) if d["clamp"] else None, d["mean"], d["std"])
                for d in data["columns"]]
        return cls(cols, data.get("version", "plan-v1"))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# distribution classification

def _skewness(x: np.ndarray) -> float:
    m2 = np.mean((x - x.mean()) ** 2)
    if m2 == 0:
        return 0.0
    return float(np.mean((x - x.mean()) ** 3) / m2 ** 1.5)


def _smoothed_hist(x: np.ndarray, bins: int = 20) -> np.ndarray:
    hist = np.histogram(x, bins=bins)[0].astype(float)
    padded = np.concatenate([hist[:1], hist, hist[-1:]])  # edge padding, no fake peaks
    return (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0


def _interior_unimodal(hist: np.ndarray) -> bool:
    """Rises to an interior peak then falls (a skewed bell, not a decay)."""
    peak = int(np.argmax(hist))
    if peak == 0:
        return False
    slack = 0.05 * hist.max()
    rising = all(hist[i + 1] >= hist[i] - slack for i in range(peak))
    falling = all(hist[i + 1] <= hist[i] + slack for i in range(peak, len(hist) - 1))
    return rising and falling


def _monotone_decreasing(hist: np.ndarray) -> bool:
    slack = 0.05 * hist.max()
    return all(hist[i + 1] <= hist[i] + slack for i in range(len(hist) - 1))


def classify_distribution(column: np.ndarray) -> str:
    """Pick the transform for one feature column.

    Rules, in order: a skewed bell (|skew| > 1 with an interior-peak
    histogram) takes Box-Cox; a column dominated by one exact value
    (mode frequency > 50%) takes sqrt; an exponential-looking decay
    (skew > 2, nonnegative support, monotone-decreasing histogram)
    takes log; everything else is left alone.
    """
    column = np.asarray(column, dtype=float)
    if column.size == 0 or np.all(column == column[0]):
        return "identity"
    skew = _skewness(column)
    hist = _smoothed_hist(column)
    if abs(skew) > 1.0 and _interior_unimodal(hist):
        return "boxcox"
    _, counts = np.unique(column, return_counts=True)
    if counts.max() / column.size > 0.5:
        return "sqrt"
    if skew > 2.0 and column.min() >= 0 and _monotone_decreasing(hist):
        return "log"
    return "identity"


# ---------------------------------------------------------------------------
# box-cox

def boxcox_fit(column: np.ndarray) -> float:
    """Grid-search lambda in [-5, 5] (step 0.01) maximizing the Box-Cox
    log-likelihood. Callers shift nonpositive columns first."""
    x = np.asarray(column, dtype=float)
    if np.all(x == x[0]):
        return 1.0
    n = x.size
    log_x = np.log(x)
    log_sum = log_x.sum()
    best_lam, best_llf = 1.0, -np.inf
    for lam in np.arange(-5.0, 5.0 + 1e-9, 0.01):
        y = boxcox_apply(x, lam)
        var = y.var()
        if var <= 0:
            continue
        llf = -0.5 * n * np.log(var) + (lam - 1.0) * log_sum
        if llf > best_llf:
            best_llf, best_lam = llf, float(lam)
    return round(best_lam, 2)


def boxcox_apply(x: np.ndarray, lam: float) -> np.ndarray:
    if abs(lam) < 1e-12:
        return np.log(x)
    return (np.power(x, lam) - 1.0) / lam


def boxcox_invert(y: np.ndarray, lam: float) -> np.ndarray:
    if abs(lam) < 1e-12:
        return np.exp(y)
    return np.power(lam * y + 1.0, 1.0 / lam)


# ---------------------------------------------------------------------------
# outliers

def remove_outliers(column: np.ndarray, cutoff: float = Z_CUTOFF):
    """Flag |z| > cutoff entries and winsorize them to the boundary.

    Returns (mask of flagged entries, clamped column). Rows are never
    dropped so features stay aligned with their ratings.
    """
    x = np.asarray(column, dtype=float)
    std = x.std()
    if std == 0:
        return np.zeros(x.size, dtype=bool), x.copy()
    lo, hi = x.mean() - cutoff * std, x.mean() + cutoff * std
    mask = (x < lo) | (x > hi)
    return mask, np.clip(x, lo, hi)


# ---------------------------------------------------------------------------
# the fitted per-column plan

def fit_transform_plan(matrix: np.ndarray, names) -> TransformPlan:
    """Classify, fit and normalize every column on the given (training) rows."""
    cols = []
    for j, name in enumerate(names):
        x = matrix[:, j].astype(float)
        kind = classify_distribution(x)
        lam, shift = 1.0, 0.0
        if kind == "boxcox":
            if x.min() <= 0:
                shift = -float(x.min()) + EPS
            lam = boxcox_fit(x + shift)
        elif kind == "sqrt":
            if x.min() < 0:
                shift = -float(x.min())
        plan = ColumnPlan(name=name, transform=kind, lam=lam, shift=shift)
        y = _raw_transform(x, plan)
        if y.std() > 0:
            plan.clamp = (float(y.mean() - Z_CUTOFF * y.std()),
                          float(y.mean() + Z_CUTOFF * y.std()))
            y = np.clip(y, *plan.clamp)
        plan.mean = float(y.mean())
        plan.std = float(y.std()) if y.std() > 0 else 1.0
        cols.append(plan)
    return TransformPlan(cols)


def _raw_transform(x: np.ndarray, plan: ColumnPlan) -> np.ndarray:
    if plan.transform == "boxcox":
        # test rows may fall below the training minimum; pin them to the
        # transform's support instead of producing NaN
        return boxcox_apply(np.maximum(x + plan.shift, EPS), plan.lam)
    if plan.transform == "sqrt":
        return np.sqrt(np.maximum(x + plan.shift, 0.0))
    if plan.transform == "log":
        return np.log(np.maximum(x + plan.shift, 0.0) + EPS)
    return x.astype(float)


def _transform_column(x: np.ndarray, plan: ColumnPlan) -> np.ndarray:
    y = _raw_transform(np.asarray(x, dtype=float), plan)
    if plan.clamp is not None:
        y = np.clip(y, plan.clamp[0], plan.clamp[1])
    return (y - plan.mean) / plan.std


def apply_transform_plan(plan: TransformPlan, matrix: np.ndarray) -> np.ndarray:
    out = np.empty_like(matrix, dtype=float)
    for j, cplan in enumerate(plan.columns):
        out[:, j] = _transform_column(matrix[:, j], cplan)
    return out


def invert_transform_plan(plan: TransformPlan, matrix: np.ndarray) -> np.ndarray:
    """Inverse of the plan for values that were not winsorized."""
    out = np.empty_like(matrix, dtype=float)
    for j, cplan in enumerate(plan.columns):
        y = matrix[:, j] * cplan.std + cplan.mean
        if cplan.transform == "boxcox":
            out[:, j] = boxcox_invert(y, cplan.lam) - cplan.shift
        elif cplan.transform == "sqrt":
            out[:, j] = y ** 2 - cplan.shift
        elif cplan.transform == "log":
            out[:, j] = np.exp(y) - EPS - cplan.shift
        else:
            out[:, j] = y
    return out


# ---------------------------------------------------------------------------
# PCA / truncated SVD extension

@dataclass
class ProjectionModel:
    mean: np.ndarray
    pca_basis: np.ndarray         # (30, d) rows orthonormal
    explained: np.ndarray         # (30,) decreasing
    svd_basis: np.ndarray         # (9, d)

    def apply(self, matrix: np.ndarray) -> tuple[np.ndarray, list[str]]:
        centered = matrix - self.mean
        block = np.hstack([centered @ self.pca_basis.T, centered @ self.svd_basis.T])
        names = [f"pca_{i}" for i in range(self.pca_basis.shape[0])] + \
                [f"svd_{i}" for i in range(self.svd_basis.shape[0])]
        return block, names

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.mean, self.pca_basis, self.svd_basis):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def fit_projections(train: np.ndarray, n_pca: int = PCA_COMPONENTS,
                    n_svd: int = SVD_COMPONENTS) -> ProjectionModel:
    """PCA and truncated SVD of the centered training matrix; components
    sorted by decreasing explained variance, signs fixed so the largest
    loading of each component is positive."""
    mean = train.mean(axis=0)
    centered = train - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if vt.shape[0] < n_pca:
        raise ValueError(f"need at least {n_pca} singular directions, got {vt.shape[0]}")
    signs = np.sign(vt[np.arange(vt.shape[0]), np.abs(vt).argmax(axis=1)])
    signs[signs == 0] = 1.0
    vt = vt * signs[:, None]
    explained = (s ** 2) / max(train.shape[0], 1)
    return ProjectionModel(mean, vt[:n_pca], explained[:n_pca], vt[:n_svd])


# ---------------------------------------------------------------------------
# variant assembly

@dataclass
class FeatureMatrix:
    values: np.ndarray
    names: list[str]

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ValueError("matrix width must match name count")


def assemble(variant: str, handcrafted: FeatureMatrix, projections: FeatureMatrix,
             autoencoder: FeatureMatrix | None = None,
             bovw: FeatureMatrix | None = None) -> FeatureMatrix:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    blocks = [handcrafted, projections]
    if variant in ("d1", "d2"):
        if autoencoder is None:
            raise ValueError(f"variant {variant} needs the autoencoder block")
        blocks.append(autoencoder)
    if variant == "d1":
        if bovw is None:
            raise ValueError("variant d1 needs the bag-of-visual-words block")
        blocks.append(bovw)
    values = np.hstack([b.values for b in blocks])
    names = [n for b in blocks for n in b.names]
    return FeatureMatrix(values, names)


@dataclass
class FittedFold:
    """Everything fitted on one fold's training rows, plus fingerprints."""
    plan: TransformPlan
    projection: ProjectionModel
    codebooks: dict | None
    matrix: FeatureMatrix
    fingerprints: dict[str, str] = field(default_factory=dict)


def fit_fold_pipeline(handcrafted: np.ndarray, hc_names, train_idx: np.ndarray,
                      variant: str, ae_block: np.ndarray | None = None,
                      descriptor_sets: list | None = None,
                      ks=bovw_mod.BOVW_KS, seed: int = 0,
                      kmeans_iters: int = 100) -> FittedFold:
    """Fit transforms / projections (and, for d1, codebooks) on training
    rows only and produce the assembled matrix for all rows."""
    raw_blocks = [(handcrafted, list(hc_names))]
    if variant in ("d1", "d2"):
        if ae_block is None:
            raise ValueError(f"variant {variant} needs autoencoder codes")
        side = int(np.sqrt(ae_block.shape[1]))
        raw_blocks.append((ae_block, [f"ae_{r}_{c}" for r in range(side) for c in range(side)]))
    codebooks = None
    if variant == "d1":
        if descriptor_sets is None:
            raise ValueError("variant d1 needs per-image descriptor sets")
        train_desc = [descriptor_sets[i] for i in train_idx]
        codebooks = {k: bovw_mod.fit_codebook(train_desc, k, seed=seed + k,
                                              max_iter=kmeans_iters) for k in ks}
        block, names = bovw_mod.bovw_block(descriptor_sets, codebooks)
        raw_blocks.append((block, names))
    raw = np.hstack([b for b, _ in raw_blocks])
    raw_names = [n for _, names in raw_blocks for n in names]
    plan = fit_transform_plan(raw[train_idx], raw_names)
    polished = apply_transform_plan(plan, raw)
    n_hc = handcrafted.shape[1]
    projection = fit_projections(polished[train_idx][:, :n_hc])
    proj_block, proj_names = projection.apply(polished[:, :n_hc])
    hc_fm = FeatureMatrix(polished[:, :n_hc], list(hc_names))
    proj_fm = FeatureMatrix(proj_block, proj_names)
    ae_fm = bovw_fm = None
    offset = n_hc
    if variant in ("d1", "d2"):
        width = raw_blocks[1][0].shape[1]
        ae_fm = FeatureMatrix(polished[:, offset:offset + width], raw_blocks[1][1])
        offset += width
    if variant == "d1":
        bovw_fm = FeatureMatrix(polished[:, offset:], raw_blocks[-1][1])
    matrix = assemble(variant, hc_fm, proj_fm, ae_fm, bovw_fm)
    fingerprints = {"plan": plan.fingerprint(), "projection": projection.fingerprint()}
    if codebooks is not None:
        h = hashlib.sha256()
        for k in sorted(codebooks):
            h.update(np.ascontiguousarray(codebooks[k].centroids).tobytes())
        fingerprints["codebooks"] = h.hexdigest()[:16]
    return FittedFold(plan, projection, codebooks, matrix, fingerprints)
