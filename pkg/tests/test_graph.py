import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sage.errors import DataError
from sage.graph import (Graph, build_graph, cap_degrees, clustering_coefficient, graphs_equal,
                        induced_subgraph, wl_refine)

from conftest import random_graph


def graph_from_edges(edges, n):
    return build_graph(edges, np.zeros((n, 1), dtype=np.float32), range(n))


class TestBuildGraph:
    def test_empty_edge_set_gives_isolated_nodes(self):
        g = build_graph([], np.zeros((2, 1)), ["a", "b"])
        assert g.node_count == 2
        assert list(g.degrees) == [0, 0]

    def test_duplicate_and_reversed_edges_collapse(self):
        g = build_graph([("a", "b"), ("b", "a"), ("a", "b")], np.zeros((2, 1)), ["a", "b"])
        assert g.edge_count == 1
        assert g.degree(0) == g.degree(1) == 1
        assert list(g.neighbors(0)) == [1]

    def test_self_loop_dropped(self):
        g = build_graph([("a", "a")], np.zeros((1, 1)), ["a"])
        assert g.degree(0) == 0

    def test_unknown_endpoint_rejected(self):
        with pytest.raises(DataError, match="endpoint"):
            build_graph([("a", "z")], np.zeros((2, 1)), ["a", "b"])

    def test_feature_row_mismatch_rejected(self):
        with pytest.raises(DataError, match="rows"):
            build_graph([], np.zeros((3, 1)), ["a", "b"])

    def test_non_finite_feature_rejected(self):
        feats = np.zeros((2, 2), dtype=np.float32)
        feats[1, 0] = np.nan
        with pytest.raises(DataError, match="finite"):
            build_graph([], feats, ["a", "b"])

    def test_duplicate_ids_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            build_graph([], np.zeros((2, 1)), ["a", "a"])

    def test_index_order_follows_ids(self):
        g = build_graph([("y", "x")], np.arange(4, dtype=np.float32).reshape(2, 2), ["y", "x"])
        assert g.ids == ("y", "x")
        assert g.index_of("x") == 1

    @given(st.integers(2, 10), st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)),
                                        max_size=40))
    def test_adjacency_symmetric_sorted_deduped(self, n, raw_edges):
        edges = [(u % n, v % n) for u, v in raw_edges]
        g = graph_from_edges(edges, n)
        for v in range(n):
            row = g.neighbors(v)
            assert np.all(np.diff(row) > 0)  # sorted, no duplicates
            assert v not in row
            for u in row:
                assert v in g.neighbors(int(u))


class TestCapDegrees:
    def test_over_cap_list_truncated_exactly(self, rng):
        star = [(0, i) for i in range(1, 201)]
        g = graph_from_edges(star, 201)
        capped = cap_degrees(g, 128, rng)
        assert capped.degree(0) == 128
        assert set(capped.neighbors(0)) <= set(g.neighbors(0))

    def test_below_cap_graph_unchanged(self, rng):
        g = random_graph(20, 0.2, seed=1)
        assert int(g.degrees.max()) <= 10
        assert cap_degrees(g, 128, rng) is g

    def test_retention_frequency_matches_binomial_oracle(self):
        # uniform subsample of 128 from 200: retention probability 128/200
        star = [(0, i) for i in range(1, 201)]
        g = graph_from_edges(star, 201)
        trials = 10_000
        counts = np.zeros(201, dtype=np.int64)
        rng = np.random.default_rng(2024)
        for _ in range(trials):
            kept = cap_degrees(g, 128, rng).neighbors(0)
            counts[kept] += 1
        p = 128 / 200
        sigma = np.sqrt(p * (1 - p) / trials)
        freq = counts[1:] / trials
        assert np.all(np.abs(freq - p) <= 3.2 * sigma)

    def test_idempotent_for_fixed_seed_and_never_increases(self):
        g = random_graph(40, 0.5, seed=3)
        capped = cap_degrees(g, 5, np.random.default_rng(7))
        assert int(capped.degrees.max()) <= 5
        assert np.all(capped.degrees <= g.degrees)
        again = cap_degrees(capped, 5, np.random.default_rng(7))
        assert graphs_equal(capped, again)

    def test_cap_below_one_rejected(self, rng):
        with pytest.raises(ValueError):
            cap_degrees(random_graph(5, 0.5, seed=0), 0, rng)


class TestClusteringCoefficient:
    def test_complete_graph_is_one(self):
        edges = [(i, j) for i in range(4) for j in range(i + 1, 4)]
        g = graph_from_edges(edges, 4)
        for v in range(4):
            assert clustering_coefficient(g, v) == (1.0, True)

    def test_path_midpoint_is_zero(self):
        g = graph_from_edges([(0, 1), (1, 2)], 3)
        assert clustering_coefficient(g, 1) == (0.0, True)

    def test_one_closed_of_three_pairs(self):
        # edges AB, BC, CA, CD; node C has neighbors {A, B, D}, one edge among them
        g = graph_from_edges([(0, 1), (1, 2), (2, 0), (2, 3)], 4)
        value, defined = clustering_coefficient(g, 2)
        assert defined
        assert value == pytest.approx(1 / 3)

    def test_low_degree_flagged_undefined(self):
        g = graph_from_edges([(0, 1)], 3)
        assert clustering_coefficient(g, 0) == (0.0, False)
        assert clustering_coefficient(g, 2) == (0.0, False)

    @given(st.integers(0, 400), st.integers(3, 12))
    def test_matches_exhaustive_pair_count(self, seed, n):
        g = random_graph(n, 0.4, seed=seed)
        for v in range(n):
            neigh = list(g.neighbors(v))
            closed = sum(
                1
                for i in range(len(neigh))
                for j in range(i + 1, len(neigh))
                if neigh[j] in g.neighbors(neigh[i])
            )
            d = len(neigh)
            value, defined = clustering_coefficient(g, v)
            if d < 2:
                assert (value, defined) == (0.0, False)
            else:
                assert value == pytest.approx(2 * closed / (d * (d - 1)))


def _partition(labels):
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, set()).add(i)
    return frozenset(frozenset(s) for s in groups.values())


class TestWLRefine:
    def test_isomorphic_graphs_equal_multisets(self):
        g1 = random_graph(8, 0.4, seed=11)
        perm = np.random.default_rng(5).permutation(8)
        edges = [(int(perm[u]), int(perm[v])) for u, v in g1.edge_list()]
        g2 = graph_from_edges(edges, 8)
        for iters in (1, 3, 8):
            r1 = wl_refine(g1, [0] * 8, iters)
            r2 = wl_refine(g2, [0] * 8, iters)
            assert r1.histogram == r2.histogram

    def test_regular_graph_failure_case(self):
        # a 6-cycle and two disjoint triangles are indistinguishable
        c6 = graph_from_edges([(i, (i + 1) % 6) for i in range(6)], 6)
        two_c3 = graph_from_edges([(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], 6)
        for iters in (1, 2, 6, 7):
            assert wl_refine(c6, list(c6.degrees), iters).histogram == \
                wl_refine(two_c3, list(two_c3.degrees), iters).histogram

    def test_star_vs_path_distinguished_in_one_round(self):
        star = graph_from_edges([(0, 1), (0, 2), (0, 3)], 4)
        path = graph_from_edges([(0, 1), (1, 2), (2, 3)], 4)
        assert wl_refine(star, list(star.degrees), 1).histogram != \
            wl_refine(path, list(path.degrees), 1).histogram

    def test_zero_iterations_returns_init(self):
        g = graph_from_edges([(0, 1)], 2)
        assert wl_refine(g, [5, 7], 0).labels == (5, 7)

    @given(st.integers(0, 300), st.integers(2, 12))
    def test_stabilizes_by_node_count(self, seed, n):
        g = random_graph(n, 0.35, seed=seed)
        a = wl_refine(g, [0] * n, n)
        b = wl_refine(g, [0] * n, n + 1)
        assert _partition(a.labels) == _partition(b.labels)

    def test_rejects_bad_inputs(self):
        g = graph_from_edges([(0, 1)], 2)
        with pytest.raises(ValueError):
            wl_refine(g, [0, 0], -1)
        with pytest.raises(DataError):
            wl_refine(g, [0], 2)


class TestInducedSubgraph:
    def test_keeps_internal_edges_and_ids(self):
        g = build_graph([("a", "b"), ("b", "c"), ("c", "d")],
                        np.arange(8, dtype=np.float32).reshape(4, 2), list("abcd"))
        sub = induced_subgraph(g, [0, 1, 3])
        assert sub.ids == ("a", "b", "d")
        assert sub.edge_count == 1  # only a-b survives
        assert np.array_equal(sub.features, g.features[[0, 1, 3]])

    def test_rejects_duplicates(self):
        g = random_graph(5, 0.5, seed=0)
        with pytest.raises(DataError):
            induced_subgraph(g, [0, 0])
