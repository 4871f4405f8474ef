import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from peernorms.exceptions import DataError
from peernorms.graph import (
    Network,
    intransitive_start_indicator,
    row_normalize,
    sigma_profile,
    sigma_quadratic_form,
)


def net_from_edges(edges, n, name="g", symmetrize=False):
    return Network.from_edges(name, n, edges, symmetrize=symmetrize)


def dense_sigma(g_row, p):
    p = np.asarray(p, dtype=np.float64)
    Sigma = np.outer(p, p) + np.diag(p * (1.0 - p))
    return float(g_row @ Sigma @ g_row)


def brute_force_triads(adj):
    n = adj.shape[0]
    indicator = np.zeros(n, dtype=np.int8)
    count = 0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if i == k or i == j or j == k:
                    continue
                if adj[i, j] and adj[j, k] and not adj[i, k]:
                    indicator[i] = 1
                    count += 1
    return indicator, count


class TestRowNormalize:
    def test_directed_star(self):
        net = net_from_edges([(0, 1), (0, 2)], 3)
        G = row_normalize(net)
        expected = np.array([[0.0, 0.5, 0.5], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        assert np.array_equal(G.weights, expected)

    def test_isolated_single_node(self):
        net = net_from_edges([], 1)
        G = row_normalize(net)
        assert np.array_equal(G.weights, np.zeros((1, 1)))

    def test_complete_triangle(self):
        net = net_from_edges([(0, 1), (0, 2), (1, 2)], 3, symmetrize=True)
        G = row_normalize(net)
        w = np.asarray(G.weights)
        off = w[~np.eye(3, dtype=bool)]
        assert np.allclose(off, 0.5)
        assert np.allclose(np.diag(w), 0.0)

    def test_idempotent_through_support(self):
        rng = np.random.default_rng(5)
        adj = (rng.random((12, 12)) < 0.3).astype(float)
        np.fill_diagonal(adj, 0.0)
        net = Network("a", adj)
        G = row_normalize(net)
        support = (np.asarray(G.weights) > 0).astype(float)
        G2 = row_normalize(Network("b", support))
        assert np.allclose(np.asarray(G.weights), np.asarray(G2.weights), atol=1e-15)

    def test_validation_rejects_self_loop_matrix(self):
        adj = np.eye(2)
        with pytest.raises(DataError):
            Network("bad", adj, degree=np.array([1, 1])).validate()

    def test_self_nominations_dropped_with_warning(self):
        with pytest.warns(UserWarning, match="self-nomination"):
            net = net_from_edges([(0, 0), (0, 1)], 2)
        assert net.degree.tolist() == [1, 0]


class TestIntransitiveTriads:
    def test_directed_path(self):
        net = net_from_edges([(0, 1), (1, 2)], 3)
        res = intransitive_start_indicator(net)
        assert res.indicator.tolist() == [1, 0, 0]
        assert res.count == 1

    def test_complete_triangle_has_none(self):
        net = net_from_edges([(0, 1), (0, 2), (1, 2)], 3, symmetrize=True)
        res = intransitive_start_indicator(net)
        assert res.indicator.tolist() == [0, 0, 0]
        assert res.count == 0

    def test_mixed_graph(self):
        net = net_from_edges([(0, 1), (1, 2), (0, 2), (2, 3)], 4)
        res = intransitive_start_indicator(net)
        assert res.indicator.tolist() == [1, 1, 0, 0]

    @given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=2, max_value=12))
    @settings(max_examples=40, deadline=None)
    def test_matches_brute_force(self, seed, n):
        rng = np.random.default_rng(seed)
        adj = (rng.random((n, n)) < 0.3).astype(float)
        np.fill_diagonal(adj, 0.0)
        res = intransitive_start_indicator(Network("h", adj))
        indicator, count = brute_force_triads(adj)
        assert res.indicator.tolist() == indicator.tolist()
        assert res.count == count

    def test_sparse_matches_dense(self):
        rng = np.random.default_rng(11)
        n = 40
        edges = [(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < 0.08]
        dense = Network.from_edges("d", n, edges)
        sparse = Network.from_edges("s", 2500, edges)  # stored sparse, same edges
        res_d = intransitive_start_indicator(dense)
        res_s = intransitive_start_indicator(sparse)
        assert res_s.count == res_d.count
        assert np.array_equal(res_s.indicator[:n], res_d.indicator)
        assert not res_s.indicator[n:].any()


class TestSigmaQuadraticForm:
    def test_single_friend_equals_friend_probability(self):
        g = np.array([0.0, 1.0, 0.0])
        p = np.array([0.2, 0.7, 0.9])
        assert sigma_quadratic_form(g, p) == pytest.approx(0.7, abs=1e-15)

    def test_zero_probabilities(self):
        g = np.array([0.5, 0.5])
        assert sigma_quadratic_form(g, np.zeros(2)) == 0.0

    def test_two_friend_value(self):
        g = np.array([0.5, 0.5])
        p = np.array([0.5, 0.5])
        assert sigma_quadratic_form(g, p) == pytest.approx(0.375, abs=1e-15)
        assert sigma_quadratic_form(g, p) == pytest.approx(dense_sigma(g, p), abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            sigma_quadratic_form(np.array([1.0, 0.0]), np.array([0.5]))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            sigma_quadratic_form(np.array([1.0]), np.array([1.5]))

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_matches_dense_oracle_and_bounds(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 15))
        adj = (rng.random((n, n)) < 0.4).astype(float)
        np.fill_diagonal(adj, 0.0)
        G = row_normalize(Network("r", adj))
        p = rng.random(n)
        for i in range(n):
            g_row = np.asarray(G.weights)[i]
            val = sigma_quadratic_form(g_row, p)
            assert val == pytest.approx(dense_sigma(g_row, p), abs=1e-12)
            pbar = g_row @ p
            assert pbar**2 - 1e-12 <= val <= pbar**2 + np.max(p * (1 - p)) + 1e-12
            assert -1e-12 <= val <= 1.0 + 1e-12

    def test_profile_matches_per_row(self):
        rng = np.random.default_rng(3)
        adj = (rng.random((9, 9)) < 0.4).astype(float)
        np.fill_diagonal(adj, 0.0)
        G = row_normalize(Network("r", adj))
        p = rng.random(9)
        prof = sigma_profile(G.weights, p)
        for i in range(9):
            assert prof[i] == pytest.approx(sigma_quadratic_form(np.asarray(G.weights)[i], p), abs=1e-14)
