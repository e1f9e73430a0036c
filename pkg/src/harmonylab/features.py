"""Handcrafted composition features.

Fifteen extractors over a composition and its raster, concatenated into a
fixed 70-column vector. Variable-length measurements (per-shape or
per-group lists) are compressed to (min, max, mean, std); the canonical
column order is frozen in HANDCRAFTED_LAYOUT.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .scene import BLACK, GRAY, WHITE, Composition, shape_mask

GRAVITY_CONSTANT = 1e-8
ENTROPY_GRIDS = (2, 4, 8, 16, 32, 64)
HANDCRAFTED_VERSION = "hc-v1"


class ExtractionError(ValueError):
    """A feature column produced a non-finite value."""


@dataclass(frozen=True)
class StatSummary:
    """Population statistics of a measurement list; all zeros when empty."""

    min: float
    max: float
    mean: float
    std: float

    def values(self) -> tuple[float, float, float, float]:
        return (self.min, self.max, self.mean, self.std)


@dataclass(frozen=True)
class FeatureLayout:
    names: tuple[str, ...]
    version: str

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass
class FeatureVector:
    values: np.ndarray
    layout_id: str


@dataclass(frozen=True)
class EntropyCoefficients:
    """Quadratic fit a*x^2 + b*x + c of the grid occupancy curve."""

    a: float
    b: float
    c: float


def _stat_names(prefix: str) -> list[str]:
    return [f"{prefix}_{s}" for s in ("min", "max", "mean", "std")]


def _build_layout() -> FeatureLayout:
    names: list[str] = []
    names += [f"count_{k}" for k in ("total", "triangles", "circles", "rectangles",
                                     "indeterminable", "black", "white")]
    names += ["bw_ratio", "group_count", "covered_area"]
    names += _stat_names("group_area")
    names += ["entropy_a", "entropy_b", "entropy_c"]
    for part in ("radius", "width", "height", "aspect", "rect_area"):
        names += _stat_names(f"bound_{part}")
    names += ["color_gray", "color_black", "color_white"]
    for win in ("tl", "tr", "bl", "br"):
        names += [f"third_{win}_{c}" for c in ("gray", "black", "white")]
    for side in ("left", "right"):
        names += [f"balance_{side}_{c}" for c in ("gray", "black", "white")]
    names += _stat_names("gravity")
    names += _stat_names("area")
    names += _stat_names("center_dist")
    return FeatureLayout(tuple(names), HANDCRAFTED_VERSION)


HANDCRAFTED_LAYOUT = _build_layout()


def summarize(xs) -> StatSummary:
    xs = np.asarray(list(xs), dtype=float)
    if xs.size == 0:
        return StatSummary(0.0, 0.0, 0.0, 0.0)
    return StatSummary(float(xs.min()), float(xs.max()), float(xs.mean()), float(xs.std()))


def shape_footprints(comp: Composition) -> list[np.ndarray]:
    """Per-shape boolean masks ignoring overdraw (occluded pixels included)."""
    return [shape_mask(s, comp.resolution) for s in comp.shapes]


def shape_counts(comp: Composition, raster: np.ndarray,
                 footprints: list[np.ndarray] | None = None) -> dict[str, int]:
    """Scene-level counts plus raster-resolved per-kind counts.

    A connected non-gray blob touched by the footprints of two or more
    shapes is one indeterminable shape; its members are excluded from the
    per-kind tallies. Shapes that rasterize to zero pixels are counted in
    the totals but in no kind bucket.
    """
    if footprints is None:
        footprints = shape_footprints(comp)
    counts = {
        "total": len(comp.shapes),
        "triangles": 0, "circles": 0, "rectangles": 0, "indeterminable": 0,
        "black": sum(1 for s in comp.shapes if s.color == "black"),
        "white": sum(1 for s in comp.shapes if s.color == "white"),
    }
    if not comp.shapes:
        return counts
    labels, n_comp = ndimage.label(raster != GRAY)
    shapes_per_comp: dict[int, set[int]] = {k: set() for k in range(1, n_comp + 1)}
    comps_per_shape: list[set[int]] = []
    for i, fp in enumerate(footprints):
        touched = set(np.unique(labels[fp])) - {0}
        comps_per_shape.append(touched)
        for k in touched:
            shapes_per_comp[k].add(i)
    kind_key = {"triangle": "triangles", "circle": "circles", "rectangle": "rectangles"}
    for k, members in shapes_per_comp.items():
        if len(members) >= 2:
            counts["indeterminable"] += 1
    for i, shape in enumerate(comp.shapes):
        touched = comps_per_shape[i]
        if touched and all(len(shapes_per_comp[k]) == 1 for k in touched):
            counts[kind_key[shape.kind]] += 1
    return counts


def bw_ratio(comp: Composition) -> float:
    """min(#black, #white) / max(#black, #white); zero when either is zero."""
    black = sum(1 for s in comp.shapes if s.color == "black")
    white = len(comp.shapes) - black
    if black == 0 or white == 0:
        return 0.0
    return min(black, white) / max(black, white)


def group_assignment(comp: Composition) -> list[int]:
    """Group index per shape: connected components of the nearest-neighbor
    graph over shape centers (each shape linked to its closest neighbor,
    ties to the lowest shape index)."""
    n = len(comp.shapes)
    if n == 0:
        return []
    if n == 1:
        return [0]
    centers = np.array([s.center for s in comp.shapes])
    d2 = ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    nearest = np.argmin(d2, axis=1)

    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in enumerate(nearest):
        ri, rj = find(i), find(int(j))
        if ri != rj:
            parent[ri] = rj
    roots: dict[int, int] = {}
    groups = []
    for i in range(n):
        r = find(i)
        if r not in roots:
            roots[r] = len(roots)
        groups.append(roots[r])
    return groups


def group_count(comp: Composition) -> int:
    groups = group_assignment(comp)
    return len(set(groups)) if groups else 0


def covered_area(raster: np.ndarray) -> float:
    return float((raster != GRAY).sum()) / raster.size


def group_areas(comp: Composition, raster: np.ndarray,
                footprints: list[np.ndarray] | None = None,
                groups: list[int] | None = None) -> StatSummary:
    """Covered-area ratio per group. Pixels covered by shapes of several
    groups go to the group of the nearest covering shape center."""
    if not comp.shapes:
        return summarize([])
    if footprints is None:
        footprints = shape_footprints(comp)
    if groups is None:
        groups = group_assignment(comp)
    res = comp.resolution
    best = np.full((res, res), np.inf)
    owner = np.full((res, res), -1, dtype=int)
    for i, fp in enumerate(footprints):
        if not fp.any():
            continue
        rows, cols = np.nonzero(fp)
        cx, cy = comp.shapes[i].center
        d2 = ((cols + 0.5) / res - cx) ** 2 + ((rows + 0.5) / res - cy) ** 2
        better = d2 < best[rows, cols]
        best[rows[better], cols[better]] = d2[better]
        owner[rows[better], cols[better]] = i
    per_shape = np.bincount(owner[owner >= 0].ravel(), minlength=len(comp.shapes))
    n_groups = max(groups) + 1
    per_group = np.zeros(n_groups)
    for i, g in enumerate(groups):
        per_group[g] += per_shape[i]
    return summarize(per_group / raster.size)


def entropy_poly(raster: np.ndarray) -> EntropyCoefficients:
    """Quadratic fit of the occupied-cell fraction across grid refinements.

    Grid g in {2,4,8,16,32,64} cells per side, iteration index x = 0..5;
    f(x) = fraction of cells containing at least one non-gray pixel.
    Constant curves return (0, 0, f) exactly.
    """
    res = raster.shape[0]
    rows, cols = np.nonzero(raster != GRAY)
    fs = []
    for g in ENTROPY_GRIDS:
        if rows.size == 0:
            fs.append(0.0)
            continue
        cell = (rows * g // res) * g + (cols * g // res)
        fs.append(len(np.unique(cell)) / (g * g))
    fs = np.array(fs)
    if np.all(fs == fs[0]):
        return EntropyCoefficients(0.0, 0.0, float(fs[0]))
    a, b, c = np.polyfit(np.arange(len(fs), dtype=float), fs, 2)
    return EntropyCoefficients(float(a), float(b), float(c))


def bounding_stats(comp: Composition) -> tuple[StatSummary, ...]:
    """Summaries of bounding-circle radii and axis-aligned bounding-rectangle
    widths, heights, width/height and width*height."""
    radii, widths, heights, aspects, rect_areas = [], [], [], [], []
    for s in comp.shapes:
        radii.append(s.bounding_radius())
        w, h = s.bounding_box()
        widths.append(w)
        heights.append(h)
        aspects.append(w / h)
        rect_areas.append(w * h)
    return (summarize(radii), summarize(widths), summarize(heights),
            summarize(aspects), summarize(rect_areas))


def color_distribution(raster: np.ndarray) -> tuple[int, int, int]:
    counts = np.bincount(raster.ravel(), minlength=3)
    return int(counts[GRAY]), int(counts[BLACK]), int(counts[WHITE])


def _window_counts(raster: np.ndarray, row0: int, col0: int, side: int) -> tuple[int, int, int]:
    r0, c0 = max(0, row0), max(0, col0)
    window = raster[r0:row0 + side, c0:col0 + side]
    counts = np.bincount(window.ravel(), minlength=3)
    return int(counts[GRAY]), int(counts[BLACK]), int(counts[WHITE])


def two_third_points(raster: np.ndarray) -> list[tuple[int, int, int]]:
    """Pixel-class counts in the four third-line intersection windows,
    in order (1/3,1/3), (2/3,1/3), (1/3,2/3), (2/3,2/3); window side is
    resolution // 6, clipped to the canvas."""
    res = raster.shape[0]
    side = res // 6
    lines = (res // 3, 2 * res // 3)
    out = []
    for y in lines:
        for x in lines:
            out.append(_window_counts(raster, y - side // 2, x - side // 2, side))
    return out


def balance(raster: np.ndarray) -> list[tuple[int, int, int]]:
    """Pixel-class counts in the left and right vertical thirds."""
    res = raster.shape[1]
    third = res // 3
    out = []
    for region in (raster[:, :third], raster[:, res - third:]):
        counts = np.bincount(region.ravel(), minlength=3)
        out.append((int(counts[GRAY]), int(counts[BLACK]), int(counts[WHITE])))
    return out


def gravity(comp: Composition, raster: np.ndarray,
            footprints: list[np.ndarray] | None = None) -> StatSummary:
    """Pairwise pull between shapes on opposite halves of the canvas.

    F = G * m1 * m2 / dist(c1, c2) with G = 1e-8; mass is the shape's
    footprint pixel count over the canvas pixel count. Shapes with center
    x < 0.5 are on the left. Coincident centers across the split are
    skipped; no cross pairs yields the all-zero summary.
    """
    if footprints is None:
        footprints = shape_footprints(comp)
    masses = [fp.sum() / raster.size for fp in footprints]
    left = [i for i, s in enumerate(comp.shapes) if s.center[0] < 0.5]
    right = [i for i, s in enumerate(comp.shapes) if s.center[0] >= 0.5]
    forces = []
    for i in left:
        for j in right:
            ci, cj = comp.shapes[i].center, comp.shapes[j].center
            dist = math.hypot(ci[0] - cj[0], ci[1] - cj[1])
            if dist == 0.0:
                continue
            forces.append(GRAVITY_CONSTANT * masses[i] * masses[j] / dist)
    return summarize(forces)


def area_stats(comp: Composition) -> StatSummary:
    """Analytic shape areas (occluded or clipped portions still count)."""
    return summarize([s.area() for s in comp.shapes])


def center_distance_stats(comp: Composition) -> StatSummary:
    return summarize([math.hypot(s.center[0] - 0.5, s.center[1] - 0.5) for s in comp.shapes])


def extract_handcrafted(comp: Composition, raster: np.ndarray) -> FeatureVector:
    """Concatenate all extractors in the canonical layout order."""
    footprints = shape_footprints(comp)
    groups = group_assignment(comp)
    counts = shape_counts(comp, raster, footprints)
    vals: list[float] = [counts[k] for k in ("total", "triangles", "circles", "rectangles",
                                             "indeterminable", "black", "white")]
    vals.append(bw_ratio(comp))
    vals.append(len(set(groups)) if groups else 0)
    vals.append(covered_area(raster))
    vals += group_areas(comp, raster, footprints, groups).values()
    ent = entropy_poly(raster)
    vals += [ent.a, ent.b, ent.c]
    for summary in bounding_stats(comp):
        vals += summary.values()
    vals += color_distribution(raster)
    for window in two_third_points(raster):
        vals += window
    for side in balance(raster):
        vals += side
    vals += gravity(comp, raster, footprints).values()
    vals += area_stats(comp).values()
    vals += center_distance_stats(comp).values()
    values = np.asarray(vals, dtype=float)
    if values.shape[0] != len(HANDCRAFTED_LAYOUT):
        raise ExtractionError(
            f"layout mismatch: {values.shape[0]} values vs {len(HANDCRAFTED_LAYOUT)} columns")
    bad = ~np.isfinite(values)
    if bad.any():
        raise ExtractionError(f"non-finite value in column {HANDCRAFTED_LAYOUT.names[int(np.argmax(bad))]}")
    return FeatureVector(values, HANDCRAFTED_LAYOUT.version)


def extract_many(comps, rasters) -> np.ndarray:
    return np.stack([extract_handcrafted(c, r).values for c, r in zip(comps, rasters)])


# ---------------------------------------------------------------------------
# Feature CSV

def write_feature_csv(path, ids, matrix: np.ndarray, names, version: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# layout={version}\n")
        writer = csv.writer(fh)
        writer.writerow(["id", *names])
        for comp_id, row in zip(ids, matrix):
            writer.writerow([comp_id, *(repr(float(v)) for v in row)])


def read_feature_csv(path):
    version = ""
    with open(path) as fh:
        first = fh.readline()
        if first.startswith("#"):
            version = first.strip().split("=", 1)[-1]
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        names = next(reader)[1:]
        ids, rows = [], []
        for record in reader:
            ids.append(record[0])
            rows.append([float(v) for v in record[1:]])
    matrix = np.array(rows) if rows else np.zeros((0, len(names)))
    return ids, matrix, names, version
