import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schedperf.errors import GraphStructureError
from schedperf.graph import (
    PipelineGraph,
    batch_graphs,
    normalize_adjacency,
    topological_order,
)

from helpers import random_dag


class TestPipelineGraph:
    def test_rejects_out_of_range_edge(self):
        with pytest.raises(GraphStructureError):
            PipelineGraph(num_nodes=2, edges=((0, 2),))

    def test_rejects_self_edge(self):
        with pytest.raises(GraphStructureError):
            PipelineGraph(num_nodes=2, edges=((1, 1),))

    def test_rejects_duplicate_edge(self):
        with pytest.raises(GraphStructureError):
            PipelineGraph(num_nodes=3, edges=((0, 1), (0, 1)))

    def test_rejects_cycle(self):
        with pytest.raises(GraphStructureError) as err:
            PipelineGraph(num_nodes=2, edges=((0, 1), (1, 0)))
        assert (0, 1) in err.value.edges and (1, 0) in err.value.edges

    def test_default_payload_ids(self):
        g = PipelineGraph(num_nodes=2, edges=((0, 1),))
        assert g.node_payload_ids == ("n0", "n1")


class TestNormalizeAdjacency:
    def test_single_node(self):
        g = PipelineGraph(num_nodes=1, edges=())
        assert normalize_adjacency(g).matrix == pytest.approx(np.array([[1.0]]))

    def test_two_node_chain(self):
        g = PipelineGraph(num_nodes=2, edges=((0, 1),))
        expected = np.array([[1.0, 0.0], [0.5, 0.5]])
        np.testing.assert_allclose(normalize_adjacency(g).matrix, expected)

    def test_three_node_chain(self):
        g = PipelineGraph(num_nodes=3, edges=((0, 1), (1, 2)))
        expected = np.array([[1.0, 0, 0], [0.5, 0.5, 0], [0, 0.5, 0.5]])
        np.testing.assert_allclose(normalize_adjacency(g).matrix, expected)

    def test_rejects_zero_nodes(self):
        with pytest.raises(GraphStructureError):
            normalize_adjacency(PipelineGraph(num_nodes=0, edges=()))

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_rows_sum_to_one(self, seed):
        g = random_dag(np.random.default_rng(seed))
        rows = normalize_adjacency(g).matrix.sum(axis=1)
        np.testing.assert_allclose(rows, 1.0, atol=1e-9)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_diagonal_positive_and_sparsity_pattern(self, seed):
        g = random_dag(np.random.default_rng(seed))
        a = normalize_adjacency(g).matrix
        assert np.all(np.diag(a) > 0)
        allowed = np.eye(g.num_nodes, dtype=bool)
        for p, c in g.edges:
            allowed[c, p] = True
        assert not np.any(a[~allowed])

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_permutation_consistency(self, seed):
        rng = np.random.default_rng(seed)
        g = random_dag(rng)
        perm = rng.permutation(g.num_nodes)
        g2 = PipelineGraph(
            num_nodes=g.num_nodes,
            edges=tuple((int(perm[p]), int(perm[c])) for p, c in g.edges),
        )
        a1 = normalize_adjacency(g).matrix
        a2 = normalize_adjacency(g2).matrix
        p = np.zeros_like(a1)
        p[perm, np.arange(g.num_nodes)] = 1.0  # column i maps to row perm[i]
        np.testing.assert_allclose(p @ a1 @ p.T, a2, atol=1e-12)


class TestBatchGraphs:
    def test_two_singletons(self):
        g = PipelineGraph(num_nodes=1, edges=())
        adj, offsets = batch_graphs([g, g])
        np.testing.assert_allclose(adj.matrix, np.eye(2))
        assert offsets == [0, 1]

    def test_singleton_batch_equals_normalize(self):
        g = PipelineGraph(num_nodes=2, edges=((0, 1),))
        adj, offsets = batch_graphs([g])
        np.testing.assert_allclose(adj.matrix, normalize_adjacency(g).matrix)
        assert offsets == [0]

    def test_block_composition_by_hand(self):
        chain = PipelineGraph(num_nodes=2, edges=((0, 1),))
        single = PipelineGraph(num_nodes=1, edges=())
        adj, offsets = batch_graphs([chain, single])
        expected = np.zeros((3, 3))
        expected[:2, :2] = normalize_adjacency(chain).matrix
        expected[2:, 2:] = normalize_adjacency(single).matrix
        np.testing.assert_allclose(adj.matrix, expected)
        assert offsets == [0, 2]

    def test_rejects_empty_list(self):
        with pytest.raises(ValueError):
            batch_graphs([])

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_no_cross_graph_entries(self, seed):
        rng = np.random.default_rng(seed)
        graphs = [random_dag(rng) for _ in range(int(rng.integers(2, 5)))]
        adj, offsets = batch_graphs(graphs)
        at = 0
        for g in graphs:
            block = adj.matrix[at : at + g.num_nodes, at : at + g.num_nodes]
            np.testing.assert_allclose(block, normalize_adjacency(g).matrix)
            adj.matrix[at : at + g.num_nodes, at : at + g.num_nodes] = 0.0
            at += g.num_nodes
        assert not np.any(adj.matrix)


class TestTopologicalOrder:
    def test_chain(self):
        g = PipelineGraph(num_nodes=3, edges=((0, 1), (1, 2)))
        assert topological_order(g) == [0, 1, 2]

    def test_fan_in_tie_break_ascending(self):
        g = PipelineGraph(num_nodes=3, edges=((0, 2), (1, 2)))
        assert topological_order(g) == [0, 1, 2]

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_producers_precede_consumers(self, seed):
        g = random_dag(np.random.default_rng(seed))
        pos = {n: i for i, n in enumerate(topological_order(g))}
        assert all(pos[p] < pos[c] for p, c in g.edges)
