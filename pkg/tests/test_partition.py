"""Partition process tests: rates, cut laws, simulation, restriction."""

import math

import numpy as np
import pytest
from scipy import stats

from bspforest import geometry as g
from bspforest import partition as pt
from bspforest.errors import ConfigError, GeometryError

from oracles import sample_direction_oracle


def unit_cube_state():
    return pt.FullPartition(pt.Box.unit(3))


class TestPairHulls:
    def test_matches_direct_hull(self):
        rng = np.random.default_rng(0)
        for n in (5, 30, 60, 200):
            X = rng.uniform(size=(n, 5))
            pairs = pt.all_pairs(5)
            hulls, pes = pt.pair_projection_hulls(X, pairs)
            for (d1, d2), hull, pe in zip(pairs, hulls, pes):
                direct = g.convex_hull(X[:, (d1, d2)])
                assert np.array_equal(np.sort(hull, axis=0), np.sort(direct.vertices, axis=0))
                assert pe == pytest.approx(g.perimeter(direct))


class TestWaitingTime:
    def test_cube_rate_and_mean(self):
        state = unit_cube_state()
        assert state.total_rate == pytest.approx(12.0)
        rng = np.random.default_rng(1)
        draws = np.array([pt.sample_waiting_time(state, 1.0, rng) for _ in range(20_000)])
        se = draws.std() / math.sqrt(len(draws))
        assert abs(draws.mean() - 1 / 12) <= 3 * se

    def test_point_leaves_halt(self):
        X = np.tile([[0.5, 0.5, 0.5]], (4, 1))
        state = pt.HullPartition(X)
        assert pt.sample_waiting_time(state, 1.0, np.random.default_rng(0)) == math.inf

    def test_2d_square_rate(self):
        state = pt.FullPartition(pt.Box.unit(2))
        assert state.total_rate == pytest.approx(4.0)

    def test_negative_rate_scale_rejected(self):
        with pytest.raises(ConfigError):
            pt.sample_waiting_time(unit_cube_state(), -1.0, np.random.default_rng(0))


class TestSampleCut:
    def test_cube_pair_symmetry(self):
        state = unit_cube_state()
        rng = np.random.default_rng(2)
        counts = np.zeros(3)
        n = 30_000
        for _ in range(n):
            cut = pt.sample_cut(state, rng)
            counts[state.pairs.index(cut.dims)] += 1
        assert np.abs(counts / n - 1 / 3).max() <= 0.01

    def test_leaf_selection_proportional(self):
        # two leaves with pair-summed measures 12 (unit cube) and 4
        state = unit_cube_state()
        rng = np.random.default_rng(3)
        cut = pt.HyperplaneCut(0, (0, 1), g.CutLine(math.pi, (0.5, 0.0)), 0.1)
        state.apply_cut(cut)
        ids = sorted(state.leaves)
        rates = {k: state.leaves[k].rate for k in ids}
        total = sum(rates.values())
        n = 20_000
        counts = {k: 0 for k in ids}
        for _ in range(n):
            counts[pt.sample_cut(state, rng).node_id] += 1
        for k in ids:
            assert counts[k] / n == pytest.approx(rates[k] / total, abs=0.015)

    def test_no_cuttable_leaf(self):
        X = np.tile([[0.1, 0.2, 0.3]], (3, 1))
        state = pt.HullPartition(X)
        with pytest.raises(GeometryError, match="no cuttable leaf"):
            pt.sample_cut(state, np.random.default_rng(0))


class TestCloudClipping:
    def test_matches_polygon_split_in_2d(self):
        rng = np.random.default_rng(4)
        square = pt.Box.unit(2)
        for _ in range(200):
            poly = g.convex_hull(square.corners())
            theta = g.sample_cut_direction(poly, rng)
            line = g.sample_cut_position(poly, theta, rng)
            neg_cloud, pos_cloud = pt.clip_cloud(square.corners(), (0, 1), line)
            left, right = g.split_polygon(poly, line)
            assert g.area(g.convex_hull(neg_cloud)) == pytest.approx(g.area(left), abs=1e-9)
            assert g.area(g.convex_hull(pos_cloud)) == pytest.approx(g.area(right), abs=1e-9)

    def test_cube_volume_conserved_in_projection(self):
        # areas of the pair-projections of the two children cover the parent's
        rng = np.random.default_rng(5)
        state = unit_cube_state()
        cut = pt.sample_cut(state, rng)
        lid, rid = state.apply_cut(cut)
        pi = state.pairs.index(cut.dims)
        a_left = g.area(state.leaves[lid].polygon(pi))
        a_right = g.area(state.leaves[rid].polygon(pi))
        assert a_left + a_right == pytest.approx(1.0, abs=1e-9)


class TestSimulate:
    def test_tiny_budget_single_leaf(self):
        rng = np.random.default_rng(6)
        trees = [pt.simulate(pt.Box.unit(3), budget=1e-6, rate_scale=1.0, rng=rng) for _ in range(50)]
        assert np.mean([t.num_cuts == 0 for t in trees]) > 0.9

    def test_budget_zero_rejected(self):
        with pytest.raises(ConfigError):
            pt.simulate(pt.Box.unit(3), budget=0.0)

    def test_cube_expected_cuts_with_calibration(self):
        # typical tree depth under the first-cost calibration; the cut-count
        # distribution is right-skewed, so the median carries the claim
        rng = np.random.default_rng(7)
        counts = [pt.simulate(pt.Box.unit(3), budget=0.7, rng=rng).num_cuts for _ in range(300)]
        assert 3.0 <= np.median(counts) <= 6.0
        assert 3.0 <= np.mean(counts) <= 7.0

    def test_times_increasing_and_within_budget(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(size=(40, 3))
        tree = pt.simulate(X, budget=1.0, rng=rng)
        assert tree.num_cuts > 0
        for node, cut in tree.cuts.items():
            assert cut.time <= 1.0
            child = node
            while child != 0:
                parent = (child - 1) // 2
                assert tree.cuts[parent].time < cut.time or parent == node
                child = parent

    def test_leaf_rows_partition_and_routing(self):
        rng = np.random.default_rng(9)
        X = rng.uniform(size=(60, 4))
        tree = pt.simulate(X, budget=0.9, rng=rng)
        rows = np.concatenate(list(tree.leaf_rows.values()))
        assert sorted(rows.tolist()) == list(range(60))
        ids = tree.route_matrix(X)
        for leaf, members in tree.leaf_rows.items():
            assert (ids[members] == leaf).all()

    def test_hull_cuts_always_separate_data(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            X = rng.uniform(size=(25, 3))
            tree = pt.simulate(X, budget=1.0, rng=rng)
            assert all(r.size >= 1 for r in tree.leaf_rows.values())
            assert len(tree.leaf_rows) == tree.num_cuts + 1

    def test_d2_reduction_first_cut_direction(self):
        # with d=2 the first-cut direction follows the 2-D direction density
        rng = np.random.default_rng(11)
        poly = g.convex_hull(pt.Box.unit(2).corners())
        draws = []
        for _ in range(4_000):
            state = pt.FullPartition(pt.Box.unit(2))
            draws.append(pt.sample_cut(state, rng).line.angle)
        oracle = sample_direction_oracle(poly.vertices, 4_000, rng)
        assert stats.ks_2samp(draws, oracle).pvalue > 0.01

    def test_axis_mode_cuts_are_axis_aligned(self):
        rng = np.random.default_rng(12)
        X = rng.uniform(size=(50, 3))
        tree = pt.simulate(X, budget=1.0, mode="axis", rng=rng)
        assert tree.num_cuts > 0
        for cut in tree.cuts.values():
            assert cut.line.angle in (math.pi / 2, math.pi)

    def test_axis_mode_dimension_frequency(self):
        # Mondrian reduction: P(cut dim i) proportional to box side length
        box = pt.Box(np.zeros(2), np.array([3.0, 1.0]))
        rng = np.random.default_rng(13)
        n, hits = 20_000, 0
        for _ in range(n):
            state = pt.AxisPartition(box=box)
            cut = pt.sample_cut(state, rng)
            dim = cut.dims[0] if cut.line.angle > 3.0 else cut.dims[1]
            hits += dim == 0
        assert hits / n == pytest.approx(0.75, abs=0.01)


class TestRestrict:
    def test_outside_cut_dropped(self):
        cut = pt.HyperplaneCut(0, (0, 1), g.CutLine(math.pi, (0.9, 0.0)), 0.2)
        tree = pt.BspTree(3, {0: cut}, {1: 0.0, 2: 0.0})
        sub = pt.Box(np.zeros(3), np.full(3, 0.5))
        restricted = pt.restrict(tree, sub)
        assert restricted.num_cuts == 0

    def test_center_cut_retained_identically(self):
        cut = pt.HyperplaneCut(0, (0, 2), g.CutLine(2.0, (0.25 * math.cos(2.0), 0.25 * math.sin(2.0))), 0.3)
        tree = pt.BspTree(3, {0: cut}, {1: 0.0, 2: 0.0})
        sub = pt.Box(np.zeros(3), np.full(3, 0.5))
        restricted = pt.restrict(tree, sub)
        assert restricted.num_cuts == 1
        kept = restricted.cuts[0]
        assert kept.dims == cut.dims
        assert kept.line == cut.line
        assert kept.time == cut.time

    def test_collapse_keeps_leaf_count_consistent(self):
        rng = np.random.default_rng(14)
        sub = pt.Box(np.zeros(3), np.full(3, 0.5))
        for _ in range(30):
            tree = pt.simulate(pt.Box.unit(3), budget=0.7, rate_scale=1 / 3, rng=rng)
            restricted = pt.restrict(tree, sub)
            assert len(restricted.leaf_means) == restricted.num_cuts + 1
            assert restricted.num_cuts <= tree.num_cuts
            for cut in restricted.cuts.values():
                assert cut.time <= 0.7
