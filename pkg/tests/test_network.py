import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmala.errors import DimensionMismatch, DisconnectedGraph, NonSymmetric, SchemeGraphMismatch
from dmala.network import (
    SCHEMES,
    Graph,
    MixingMatrix,
    build_mixing_matrix,
    check_doubly_stochastic,
    mix,
    spectral_gap,
)


def dense_beta(weights):
    # brute-force oracle: general (non-symmetric) eigensolver on the full matrix
    mags = np.sort(np.abs(np.linalg.eigvals(weights)))[::-1]
    return float(mags[1]) if len(mags) > 1 else 0.0


@st.composite
def connected_graphs(draw, max_m=12):
    m = draw(st.integers(1, max_m))
    # random spanning tree plus random extra edges
    edges = set()
    order = draw(st.permutations(range(m)))
    for k in range(1, m):
        parent = order[draw(st.integers(0, k - 1))]
        edges.add((parent, order[k]))
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    if pairs:
        extra = draw(st.lists(st.sampled_from(pairs), max_size=2 * m))
        edges.update(extra)
    return Graph(m, edges)


class TestGraph:
    def test_edges_normalized_and_deduplicated(self):
        g = Graph(3, [(1, 0), (0, 1), (2, 1)])
        assert g.edges == frozenset({(0, 1), (1, 2)})

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError):
            Graph(3, [(1, 1)])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            Graph(3, [(0, 3)])

    def test_connectivity(self):
        assert Graph.ring(6).is_connected()
        assert not Graph(4, [(0, 1), (2, 3)]).is_connected()

    def test_named_topologies(self):
        assert Graph.named("complete", 4).is_complete()
        assert len(Graph.named("ring", 5).edges) == 5
        assert len(Graph.named("path", 5).edges) == 4
        assert Graph.ring(2) == Graph.path(2)
        with pytest.raises(ValueError):
            Graph.named("star", 4)

    def test_neighbors_and_degrees(self):
        g = Graph.ring(5)
        assert g.neighbors(0) == [1, 4]
        assert g.degrees().tolist() == [2] * 5


class TestBuildMixingMatrix:
    def test_uniform_complete_entries(self):
        w = build_mixing_matrix(Graph.complete(4), "uniform_complete")
        np.testing.assert_array_equal(w.weights, np.full((4, 4), 0.25))

    def test_uniform_complete_beta_zero(self):
        w = build_mixing_matrix(Graph.complete(4), "uniform_complete")
        assert abs(w.beta) < 1e-12

    def test_ring_lazy_uniform_beta_closed_form(self):
        w = build_mixing_matrix(Graph.ring(5), "lazy_uniform")
        np.testing.assert_allclose(w.weights[0], [1 / 3, 1 / 3, 0, 0, 1 / 3])
        expected = 1 / 3 + (2 / 3) * np.cos(2 * np.pi / 5)
        assert abs(w.beta - expected) < 1e-12
        assert abs(w.beta - 0.5393446629166316) < 1e-12

    def test_uniform_complete_needs_complete_graph(self):
        with pytest.raises(SchemeGraphMismatch):
            build_mixing_matrix(Graph.ring(5), "uniform_complete")

    def test_disconnected_rejected(self):
        with pytest.raises(DisconnectedGraph):
            build_mixing_matrix(Graph(4, [(0, 1), (2, 3)]), "lazy_uniform")

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            build_mixing_matrix(Graph.ring(4), "max_degree")

    def test_single_agent(self):
        w = build_mixing_matrix(Graph.complete(1), "uniform_complete")
        assert w.weights.tolist() == [[1.0]]
        assert w.beta == 0.0

    @given(connected_graphs(), st.sampled_from(SCHEMES))
    def test_invariants_on_random_graphs(self, graph, scheme):
        if scheme == "uniform_complete" and not graph.is_complete():
            with pytest.raises(SchemeGraphMismatch):
                build_mixing_matrix(graph, scheme)
            return
        w = build_mixing_matrix(graph, scheme)
        check_doubly_stochastic(w.weights, graph)
        assert (w.weights >= 0).all()
        assert w.beta < 1.0
        assert abs(w.beta - dense_beta(w.weights)) < 1e-9


class TestSpectralGap:
    def test_complete_two_agents(self):
        assert abs(spectral_gap(np.full((2, 2), 0.5))) < 1e-15

    def test_ring_matches_dense_oracle(self):
        w = build_mixing_matrix(Graph.ring(5), "lazy_uniform")
        assert abs(spectral_gap(w) - dense_beta(w.weights)) < 1e-9

    def test_path_metropolis_matches_oracle(self):
        w = build_mixing_matrix(Graph.path(3), "metropolis_hastings_weights")
        # W = [[2/3,1/3,0],[1/3,1/3,1/3],[0,1/3,2/3]] has spectrum {1, 2/3, 0}
        assert abs(spectral_gap(w) - 2 / 3) < 1e-9
        assert abs(spectral_gap(w) - dense_beta(w.weights)) < 1e-9

    def test_non_symmetric_rejected(self):
        with pytest.raises(NonSymmetric):
            spectral_gap(np.array([[0.5, 0.5], [0.2, 0.8]]))

    def test_laplacian_rows_sum_to_zero(self):
        w = build_mixing_matrix(Graph.ring(6), "metropolis_hastings_weights")
        np.testing.assert_allclose(w.laplacian().sum(axis=1), 0, atol=1e-14)


class TestMix:
    def test_complete_one_round_is_average(self, rng):
        w = build_mixing_matrix(Graph.complete(4), "uniform_complete")
        X = rng.standard_normal((4, 3))
        out = mix(w, X, 1)
        np.testing.assert_allclose(out, np.tile(X.mean(0), (4, 1)), atol=1e-15)

    def test_consensus_state_fixed(self, rng):
        w = build_mixing_matrix(Graph.ring(5), "lazy_uniform")
        X = np.tile(rng.standard_normal(3), (5, 1))
        np.testing.assert_allclose(mix(w, X, 3), X, atol=1e-14)

    def test_ring_many_rounds_reaches_consensus(self, rng):
        w = build_mixing_matrix(Graph.ring(5), "lazy_uniform")
        X = rng.standard_normal((5, 2))
        out = mix(w, X, 200)
        assert np.abs(out - X.mean(0)).max() < 1e-8

    def test_vector_input(self):
        w = build_mixing_matrix(Graph.complete(3), "uniform_complete")
        np.testing.assert_allclose(mix(w, np.array([0.0, 3.0, 6.0])), [3.0, 3.0, 3.0])

    def test_bad_inputs(self):
        w = build_mixing_matrix(Graph.complete(3), "uniform_complete")
        with pytest.raises(DimensionMismatch):
            mix(w, np.zeros((4, 2)))
        with pytest.raises(ValueError):
            mix(w, np.zeros((3, 2)), 0)

    @given(connected_graphs(max_m=8), st.sampled_from(SCHEMES[1:]), st.integers(1, 5),
           st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_mean_preservation_and_contraction(self, graph, scheme, k, d, seed):
        w = build_mixing_matrix(graph, scheme)
        X = np.random.default_rng(seed).standard_normal((graph.m, d))
        out = mix(w, X, k)
        np.testing.assert_allclose(out.mean(0), X.mean(0), atol=1e-10)
        xbar = X.mean(0)
        assert np.linalg.norm(out - xbar) <= w.beta**k * np.linalg.norm(X - xbar) + 1e-8

    def test_power_cache_returns_readonly(self):
        w = build_mixing_matrix(Graph.ring(4), "lazy_uniform")
        p = w.power(3)
        np.testing.assert_allclose(p, np.linalg.matrix_power(w.weights, 3))
        assert not p.flags.writeable


def test_check_doubly_stochastic_failures():
    with pytest.raises(ValueError):
        check_doubly_stochastic(np.array([[0.6, 0.6], [0.6, 0.6]]))
    with pytest.raises(NonSymmetric):
        check_doubly_stochastic(np.array([[0.5, 0.5], [0.4, 0.6]]))
    with pytest.raises(ValueError):
        check_doubly_stochastic(np.full((3, 3), 1 / 3), Graph.path(3))
    with pytest.raises(DimensionMismatch):
        check_doubly_stochastic(np.ones((2, 3)))


def test_identity_plus_adjacency_over_m_is_not_stochastic():
    # (I + A) / m for a degree-2 ring: rows sum to 3/5, which is why lazy weights are used
    A = np.zeros((5, 5))
    for i in range(5):
        A[i, (i + 1) % 5] = A[(i + 1) % 5, i] = 1
    with pytest.raises(ValueError):
        check_doubly_stochastic((np.eye(5) + A) / 5)


def test_mixing_matrix_is_frozen():
    w = MixingMatrix(np.eye(2), 1.0)
    with pytest.raises(Exception):
        w.beta = 0.0
