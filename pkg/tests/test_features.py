import math

import numpy as np
import pytest

from harmonylab import features
from harmonylab.features import (
    HANDCRAFTED_LAYOUT, StatSummary, area_stats, balance, bounding_stats,
    bw_ratio, center_distance_stats, color_distribution, covered_area,
    entropy_poly, extract_handcrafted, gravity, group_areas,
    group_assignment, group_count, read_feature_csv, shape_counts,
    summarize, two_third_points, write_feature_csv,
)
from harmonylab.scene import BLACK, GRAY, WHITE, default_config, generate, rasterize

from test_scene import circle, make_comp, rect, triangle


# ---------------------------------------------------------------------------
# independent oracles

def nn_graph_components(centers):
    """O(n^2) nearest-neighbor graph component count via repeated sweeps."""
    n = len(centers)
    if n == 0:
        return 0
    if n == 1:
        return 1
    edges = set()
    for i in range(n):
        best, best_d = None, float("inf")
        for j in range(n):
            if i == j:
                continue
            d = (centers[i][0] - centers[j][0]) ** 2 + (centers[i][1] - centers[j][1]) ** 2
            if d < best_d:
                best, best_d = j, d
        edges.add(frozenset((i, best)))
    labels = list(range(n))
    changed = True
    while changed:
        changed = False
        for e in edges:
            a, b = tuple(e)
            if labels[a] != labels[b]:
                new = min(labels[a], labels[b])
                old = max(labels[a], labels[b])
                labels = [new if v == old else v for v in labels]
                changed = True
    return len(set(labels))


def brute_gravity(comp, raster):
    masses = []
    from harmonylab.scene import shape_mask
    for s in comp.shapes:
        masses.append(shape_mask(s, comp.resolution).sum() / raster.size)
    forces = []
    for i, si in enumerate(comp.shapes):
        for j, sj in enumerate(comp.shapes):
            if si.center[0] < 0.5 and sj.center[0] >= 0.5:
                r = math.hypot(si.center[0] - sj.center[0], si.center[1] - sj.center[1])
                if r > 0:
                    forces.append(1e-8 * masses[i] * masses[j] / r)
    return forces


def quad_fit_oracle(ys):
    xs = np.arange(len(ys), dtype=float)
    A = np.stack([xs ** 2, xs, np.ones_like(xs)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.asarray(ys, dtype=float), rcond=None)
    return coef


def occupancy_curve(raster):
    res = raster.shape[0]
    ys = []
    for g in (2, 4, 8, 16, 32, 64):
        occupied = 0
        for bi in range(g):
            for bj in range(g):
                r0, r1 = bi * g_to_px(bi, g, res), None
        # simple block scan using integer cell mapping
        occ = set()
        rows, cols = np.nonzero(raster != GRAY)
        for r, c in zip(rows.tolist(), cols.tolist()):
            occ.add((r * g // res, c * g // res))
        ys.append(len(occ) / (g * g))
    return ys


def g_to_px(i, g, res):
    return i * res // g


class TestSummarize:
    def test_empty_is_zeros(self):
        assert summarize([]) == StatSummary(0, 0, 0, 0)

    def test_constant_list(self):
        assert summarize([2, 2, 2]) == StatSummary(2, 2, 2, 0)

    def test_hand_computed(self):
        s = summarize([1, 2, 3, 4])
        assert s.min == 1 and s.max == 4 and s.mean == 2.5
        assert abs(s.std - math.sqrt(1.25)) < 1e-12


class TestShapeCounts:
    def test_disjoint_shapes_counted_by_kind(self):
        comp = make_comp([circle(0.2, 0.2, 0.05), circle(0.8, 0.8, 0.05),
                          triangle(0.5, 0.5, 0.08, "white")])
        counts = shape_counts(comp, rasterize(comp))
        assert counts == {"total": 3, "triangles": 1, "circles": 2, "rectangles": 0,
                          "indeterminable": 0, "black": 2, "white": 1}

    def test_empty(self):
        comp = make_comp([])
        counts = shape_counts(comp, rasterize(comp))
        assert all(v == 0 for v in counts.values())

    def test_overlapping_rects_become_indeterminable(self):
        comp = make_comp([rect(0.45, 0.5, 0.2, 0.2), rect(0.55, 0.5, 0.2, 0.2)])
        counts = shape_counts(comp, rasterize(comp))
        assert counts["rectangles"] == 0
        assert counts["indeterminable"] == 1

    def test_occluded_shape_not_counted(self):
        comp = make_comp([circle(0.5, 0.5, 0.05, "black"), circle(0.5, 0.5, 0.15, "white")])
        counts = shape_counts(comp, rasterize(comp))
        assert counts["circles"] == 0
        assert counts["indeterminable"] == 1


class TestBWRatio:
    def test_two_to_four(self):
        comp = make_comp([circle(0.1 * i, 0.1, 0.02) for i in range(1, 3)] +
                         [circle(0.1 * i, 0.5, 0.02, "white") for i in range(1, 5)])
        assert bw_ratio(comp) == 0.5

    def test_zero_side_returns_zero(self):
        comp = make_comp([circle(0.1 * i, 0.5, 0.02, "white") for i in range(1, 6)])
        assert bw_ratio(comp) == 0.0

    def test_equal_counts(self):
        comp = make_comp([circle(0.2, 0.2, 0.02), circle(0.4, 0.2, 0.02),
                          circle(0.6, 0.2, 0.02, "white"), circle(0.8, 0.2, 0.02, "white")][:4])
        assert bw_ratio(make_comp(comp.shapes[:2] + comp.shapes[2:])) == 1.0


class TestGroups:
    def test_single_shape(self):
        assert group_count(make_comp([circle(0.5, 0.5, 0.05)])) == 1

    def test_empty(self):
        assert group_count(make_comp([])) == 0

    def test_two_tight_pairs(self):
        comp = make_comp([circle(0.1, 0.1, 0.02), circle(0.12, 0.1, 0.02),
                          circle(0.9, 0.9, 0.02), circle(0.88, 0.9, 0.02)])
        assert group_count(comp) == 2

    def test_chain_is_one_group(self):
        # Decreasing gaps so each shape's nearest neighbor is the next one.
        xs = [0.10, 0.30, 0.48, 0.64]
        comp = make_comp([circle(x, 0.5, 0.02) for x in xs])
        assert group_count(comp) == 1

    def test_matches_brute_force_oracle(self):
        cfg = default_config()
        for seed in range(30):
            comp = generate(cfg, seed)
            centers = [s.center for s in comp.shapes]
            assert group_count(comp) == nn_graph_components(centers)


class TestAreas:
    def test_covered_area_cases(self):
        assert covered_area(rasterize(make_comp([]))) == 0.0
        full = make_comp([rect(0.5, 0.5, 2.0, 2.0)])
        assert covered_area(rasterize(full)) == 1.0
        half = make_comp([rect(0.5, 0.5, 0.5, 0.5)])
        assert abs(covered_area(rasterize(half)) - 0.25) <= 0.005

    def test_group_areas_single_group(self):
        comp = make_comp([rect(0.5, 0.5, 0.4, 0.25)])
        s = group_areas(comp, rasterize(comp))
        assert abs(s.min - 0.1) < 0.005 and s.min == s.max == s.mean and s.std == 0

    def test_group_areas_two_groups(self):
        # Two tight pairs far apart: group areas 0.05+0.05 and 0.15+0.15.
        comp = make_comp([
            rect(0.2, 0.15, 0.25, 0.2), rect(0.2, 0.4, 0.25, 0.2),
            rect(0.7, 0.25, 0.375, 0.4), rect(0.7, 0.7, 0.375, 0.4),
        ])
        assert group_count(comp) == 2
        s = group_areas(comp, rasterize(comp))
        assert abs(s.min - 0.1) < 0.005
        assert abs(s.max - 0.3) < 0.005
        assert abs(s.mean - 0.2) < 0.005
        assert abs(s.std - 0.1) < 0.005

    def test_group_areas_empty(self):
        comp = make_comp([])
        assert group_areas(comp, rasterize(comp)) == StatSummary(0, 0, 0, 0)

    def test_area_stats_circle(self):
        s = area_stats(make_comp([circle(0.5, 0.5, 0.1)]))
        expected = math.pi * 0.01
        assert s.min == s.max == s.mean == pytest.approx(expected)
        assert s.std == 0

    def test_area_stats_empty(self):
        assert area_stats(make_comp([])) == StatSummary(0, 0, 0, 0)

    def test_area_stats_mixed_hand_computed(self):
        s = area_stats(make_comp([circle(0.3, 0.3, 0.1), rect(0.7, 0.7, 0.2, 0.2)]))
        areas = sorted([math.pi * 0.01, 0.04])
        assert s.min == pytest.approx(areas[0])
        assert s.max == pytest.approx(areas[1])
        assert s.mean == pytest.approx(sum(areas) / 2)


class TestEntropy:
    def test_full_canvas_exact(self):
        ent = entropy_poly(rasterize(make_comp([rect(0.5, 0.5, 2.0, 2.0)])))
        assert (ent.a, ent.b, ent.c) == (0.0, 0.0, 1.0)

    def test_empty_canvas_exact(self):
        ent = entropy_poly(rasterize(make_comp([])))
        assert (ent.a, ent.b, ent.c) == (0.0, 0.0, 0.0)

    def test_matches_least_squares_oracle(self):
        comp = make_comp([rect(0.5, 0.5, 0.12, 0.12)])
        raster = rasterize(comp)
        ent = entropy_poly(raster)
        oracle = quad_fit_oracle(occupancy_curve(raster))
        assert np.allclose([ent.a, ent.b, ent.c], oracle, atol=1e-9)


class TestBounding:
    def test_circle_bounds_itself(self):
        radius, width, height, aspect, rect_area = bounding_stats(
            make_comp([circle(0.5, 0.5, 0.1)]))
        assert radius == StatSummary(0.1, 0.1, 0.1, 0)
        assert width.mean == pytest.approx(0.2) and height.mean == pytest.approx(0.2)
        assert aspect.mean == pytest.approx(1.0)
        assert rect_area.mean == pytest.approx(0.04)

    def test_unrotated_rectangle(self):
        radius, width, height, *_ = bounding_stats(make_comp([rect(0.5, 0.5, 0.2, 0.1)]))
        assert width.mean == pytest.approx(0.2)
        assert height.mean == pytest.approx(0.1)
        assert radius.mean == pytest.approx(math.sqrt(0.01 + 0.0025))

    def test_rectangle_rotated_quarter_turn(self):
        _, width, height, *_ = bounding_stats(
            make_comp([rect(0.5, 0.5, 0.2, 0.1, rotation=math.pi / 2)]))
        assert width.mean == pytest.approx(0.1)
        assert height.mean == pytest.approx(0.2)

    def test_empty_all_zero(self):
        assert all(s == StatSummary(0, 0, 0, 0) for s in bounding_stats(make_comp([])))


class TestPixelRegions:
    def test_color_distribution_cases(self):
        empty = rasterize(make_comp([]))
        assert color_distribution(empty) == (512 * 512, 0, 0)
        full = rasterize(make_comp([rect(0.5, 0.5, 2.0, 2.0)]))
        assert color_distribution(full) == (0, 512 * 512, 0)
        half = rasterize(make_comp([rect(0.25, 0.5, 0.5, 2.0)]))
        gray, black, _ = color_distribution(half)
        assert abs(gray - black) / half.size <= 0.005

    def test_two_third_points_empty(self):
        raster = rasterize(make_comp([], resolution=600))
        side = 600 // 6
        for counts in two_third_points(raster):
            assert counts == (side * side, 0, 0)

    def test_two_third_points_black_window(self):
        res = 600
        side = res // 6
        cx = res // 3
        x0 = (cx - side // 2) / res
        x1 = (cx + (side - side // 2)) / res
        size = x1 - x0
        comp = make_comp([rect((x0 + x1) / 2, (x0 + x1) / 2, size, size)], resolution=res)
        windows = two_third_points(rasterize(comp))
        assert windows[0] == (0, side * side, 0)
        assert windows[3] == (side * side, 0, 0)

    def test_two_third_points_full_white(self):
        raster = rasterize(make_comp([rect(0.5, 0.5, 2.0, 2.0, "white")], resolution=600))
        side = 600 // 6
        assert all(c == (0, 0, side * side) for c in two_third_points(raster))

    def test_balance_empty(self):
        raster = rasterize(make_comp([], resolution=512))
        third = 512 // 3
        left, right = balance(raster)
        assert left == (third * 512, 0, 0) and right == (third * 512, 0, 0)

    def test_balance_mirror_symmetric(self):
        comp = make_comp([circle(0.3, 0.4, 0.1), circle(0.7, 0.4, 0.1)])
        left, right = balance(rasterize(comp))
        assert left == right

    def test_balance_left_bar_only(self):
        comp = make_comp([rect(0.15, 0.5, 0.2, 2.0)])
        left, right = balance(rasterize(comp))
        assert left[1] > 0
        assert right == (right[0], 0, 0) and right[1] == 0


class TestGravity:
    def test_two_shape_force_value(self):
        # Axis-aligned rects snapped to pixel edges give exact masses.
        left = rect(0.25, 0.5, 0.5, 0.2)    # mass 0.1
        right = rect(0.75, 0.5, 0.5, 0.4)   # mass 0.2
        comp = make_comp([left, right])
        raster = rasterize(comp)
        s = gravity(comp, raster)
        expected = 1e-8 * 0.1 * 0.2 / 0.5
        assert s.mean == pytest.approx(expected, rel=0.02)
        assert s.min == s.max == s.mean

    def test_all_left_is_zero(self):
        comp = make_comp([circle(0.2, 0.3, 0.05), circle(0.3, 0.6, 0.05)])
        assert gravity(comp, rasterize(comp)) == StatSummary(0, 0, 0, 0)

    def test_matches_pair_enumeration(self):
        comp = make_comp([circle(0.2, 0.2, 0.06), circle(0.3, 0.7, 0.08),
                          circle(0.8, 0.3, 0.05), circle(0.7, 0.8, 0.07)])
        raster = rasterize(comp)
        s = gravity(comp, raster)
        oracle = summarize(brute_gravity(comp, raster))
        for got, want in zip(s.values(), oracle.values()):
            assert got == pytest.approx(want, rel=1e-12)


class TestCenterDistance:
    def test_centered_shape(self):
        assert center_distance_stats(make_comp([circle(0.5, 0.5, 0.1)])) == StatSummary(0, 0, 0, 0)

    def test_corner_distance(self):
        s = center_distance_stats(make_comp([circle(0.0, 0.0, 0.1)]))
        assert s.mean == pytest.approx(math.sqrt(0.5))

    def test_symmetric_pair(self):
        s = center_distance_stats(make_comp([circle(0.3, 0.5, 0.05), circle(0.7, 0.5, 0.05)]))
        assert s.min == pytest.approx(s.max)


class TestExtract:
    def test_layout_is_70_columns(self):
        assert len(HANDCRAFTED_LAYOUT) == 70
        assert len(set(HANDCRAFTED_LAYOUT.names)) == 70

    def test_empty_composition_defined_everywhere(self):
        comp = make_comp([])
        vec = extract_handcrafted(comp, rasterize(comp))
        assert vec.values.shape == (70,)
        assert np.isfinite(vec.values).all()

    def test_random_scenes_finite(self):
        for seed in range(5):
            comp = generate(default_config(), seed)
            vec = extract_handcrafted(comp, rasterize(comp))
            assert np.isfinite(vec.values).all()

    def test_scene_features_permutation_invariant(self):
        comp = generate(default_config(), seed=11)
        raster = rasterize(comp)
        rng = np.random.default_rng(0)
        perm = list(rng.permutation(len(comp.shapes)))
        shuffled = make_comp([comp.shapes[i] for i in perm])
        names = HANDCRAFTED_LAYOUT.names
        scene_cols = [i for i, n in enumerate(names)
                      if n.startswith(("count_total", "count_black", "count_white", "bw_ratio",
                                       "group_count", "bound_", "area_", "center_dist", "gravity"))]
        a = extract_handcrafted(comp, raster).values
        b = extract_handcrafted(shuffled, rasterize(shuffled)).values
        assert np.allclose(a[scene_cols], b[scene_cols], rtol=1e-12)

    def test_pixel_conservation(self):
        comp = generate(default_config(), seed=4)
        raster = rasterize(comp)
        total = raster.size
        assert sum(color_distribution(raster)) == total
        side = comp.resolution // 6
        for counts in two_third_points(raster):
            assert sum(counts) == side * side
        third = comp.resolution // 3
        for counts in balance(raster):
            assert sum(counts) == third * comp.resolution

    def test_csv_round_trip(self, tmp_path):
        comps = [generate(default_config(), s) for s in range(3)]
        matrix = features.extract_many(comps, [rasterize(c) for c in comps])
        path = tmp_path / "features.csv"
        write_feature_csv(path, [c.id for c in comps], matrix,
                          HANDCRAFTED_LAYOUT.names, HANDCRAFTED_LAYOUT.version)
        ids, parsed, names, version = read_feature_csv(path)
        assert ids == [c.id for c in comps]
        assert names == list(HANDCRAFTED_LAYOUT.names)
        assert version == "hc-v1"
        assert np.array_equal(parsed, matrix)
