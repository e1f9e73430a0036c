"""Bag-of-visual-words features.

Local gradient-patch descriptors (scale- and rotation-SENSITIVE on
purpose: global pose carries compositional information here) are pooled
into k-means codebooks, one per codebook size, and each image becomes a
concatenation of nearest-centroid histograms.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .scene import BLACK, WHITE

BOVW_KS = (5, 10, 20, 50, 100, 200, 500)
DESCRIPTOR_DIM = 64
PATCH = 16          # descriptor patch side, pixels
CELL = 16           # interest-point sampling grid cell, pixels
N_ORI_BINS = 4
MAG_THRESHOLD = 1e-6


class CodebookError(ValueError):
    pass


@dataclass
class Codebook:
    k: int
    dim: int
    centroids: np.ndarray
    fingerprint: str

    def to_dict(self) -> dict:
        return {"k": self.k, "dim": self.dim, "fingerprint": self.fingerprint,
                "centroids": self.centroids.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Codebook":
        cb = cls(int(data["k"]), int(data["dim"]),
                 np.asarray(data["centroids"], dtype=float), data["fingerprint"])
        if cb.centroids.shape != (cb.k, cb.dim) or not np.isfinite(cb.centroids).all():
            raise CodebookError("centroid matrix does not match declared size or is non-finite")
        return cb


def raster_to_float(raster: np.ndarray, gray_level: int = 128) -> np.ndarray:
    img = np.full(raster.shape, gray_level / 255.0)
    img[raster == BLACK] = 0.0
    img[raster == WHITE] = 1.0
    return img


def detect_describe(raster: np.ndarray, gray_level: int = 128) -> np.ndarray:
    """Interest points and descriptors for one raster.

    Interest points: per grid cell, the pixel of maximal gradient
    magnitude, kept if the magnitude is non-negligible and a full patch
    fits inside the image. Descriptor: 4x4 subcells of the surrounding
    patch, each contributing a magnitude-weighted 4-bin orientation
    histogram (64 values), L2-normalized. Fully deterministic.
    """
    img = raster_to_float(raster, gray_level)
    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    ori = np.arctan2(gy, gx)
    h, w = img.shape
    half = PATCH // 2
    descriptors = []
    for ci in range(0, h - CELL + 1, CELL):
        for cj in range(0, w - CELL + 1, CELL):
            cell = mag[ci:ci + CELL, cj:cj + CELL]
            flat = int(np.argmax(cell))
            pi, pj = ci + flat // CELL, cj + flat % CELL
            if cell.ravel()[flat] <= MAG_THRESHOLD:
                continue
            if pi < half or pj < half or pi > h - half - 1 or pj > w - half - 1:
                continue
            pm = mag[pi - half:pi + half, pj - half:pj + half]
            po = ori[pi - half:pi + half, pj - half:pj + half]
            descriptors.append(_patch_descriptor(pm, po))
    if not descriptors:
        return np.zeros((0, DESCRIPTOR_DIM))
    return np.stack(descriptors)


def _patch_descriptor(pm: np.ndarray, po: np.ndarray) -> np.ndarray:
    sub = PATCH // 4
    bins = np.floor((po + np.pi) / (2 * np.pi / N_ORI_BINS)).astype(int) % N_ORI_BINS
    desc = np.zeros((4, 4, N_ORI_BINS))
    for si in range(4):
        for sj in range(4):
            m = pm[si * sub:(si + 1) * sub, sj * sub:(sj + 1) * sub].ravel()
            b = bins[si * sub:(si + 1) * sub, sj * sub:(sj + 1) * sub].ravel()
            desc[si, sj] = np.bincount(b, weights=m, minlength=N_ORI_BINS)
    vec = desc.ravel()
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def kmeans(X: np.ndarray, k: int, seed: int, max_iter: int = 100,
           tol: float = 1e-6) -> tuple[np.ndarray, list[float]]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns (centroids, per-iteration objective trace). The objective
    (sum of squared distances to the assigned centroid) never increases.
    Empty clusters keep their previous centroid.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < k:
        raise CodebookError(f"need at least {k} descriptors, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _kmeanspp_init(X, k, rng)
    trace: list[float] = []
    for _ in range(max_iter):
        d2 = _sq_dists(X, centroids)
        assign = np.argmin(d2, axis=1)
        trace.append(float(d2[np.arange(n), assign].sum()))
        new = centroids.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new[j] = X[members].mean(axis=0)
        movement = float(np.abs(new - centroids).max())
        centroids = new
        if movement < tol:
            break
    d2 = _sq_dists(X, centroids)
    trace.append(float(d2.min(axis=1).sum()))
    return centroids, trace


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d2 = ((X ** 2).sum(1)[:, None] + (C ** 2).sum(1)[None, :] - 2.0 * X @ C.T)
    return np.maximum(d2, 0.0)


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = _sq_dists(X, centroids[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = X[rng.integers(n)]
            continue
        centroids[j] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, _sq_dists(X, centroids[j:j + 1]).ravel())
    return centroids


def fit_codebook(descriptor_sets: list[np.ndarray], k: int, seed: int,
                 max_iter: int = 100) -> Codebook:
    stacks = [d for d in descriptor_sets if d.shape[0] > 0]
    if not stacks:
        raise CodebookError("no descriptors to cluster")
    X = np.concatenate(stacks, axis=0)
    centroids, _ = kmeans(X, k, seed, max_iter=max_iter)
    fingerprint = hashlib.sha256(np.ascontiguousarray(X).tobytes()).hexdigest()[:16]
    return Codebook(k, X.shape[1], centroids, fingerprint)


def histogram(descriptors: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Nearest-centroid counts; ties go to the lowest centroid index."""
    counts = np.zeros(codebook.k, dtype=int)
    if descriptors.shape[0] == 0:
        return counts
    assign = np.argmin(_sq_dists(descriptors, codebook.centroids), axis=1)
    np.add.at(counts, assign, 1)
    return counts


def bovw_names(ks=BOVW_KS) -> list[str]:
    return [f"bovw_k{k}_bin{i}" for k in ks for i in range(k)]


def bovw_block(descriptor_sets: list[np.ndarray],
               codebooks: dict[int, Codebook]) -> tuple[np.ndarray, list[str]]:
    """Concatenated histograms for every codebook size, per image."""
    ks = sorted(codebooks)
    rows = []
    for desc in descriptor_sets:
        rows.append(np.concatenate([histogram(desc, codebooks[k]) for k in ks]))
    names = [f"bovw_k{k}_bin{i}" for k in ks for i in range(k)]
    block = np.stack(rows).astype(float) if rows else np.zeros((0, len(names)))
    return block, names


def save_codebooks(path, codebooks: dict[int, Codebook]) -> None:
    with open(path, "w") as fh:
        json.dump({str(k): cb.to_dict() for k, cb in sorted(codebooks.items())}, fh)


def load_codebooks(path) -> dict[int, Codebook]:
    with open(path) as fh:
        data = json.load(fh)
    return {int(k): Codebook.from_dict(v) for k, v in data.items()}
