import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from core.exceptions import InputError
from graphs.graph import KnownSet, as_feature_matrix, build_graph
from graphs.operations import column_means, degree_histogram, low_degree_fraction, propagate


def ring(n):
    return [(i, (i + 1) % n) for i in range(n)]


class BuildGraphTests(SimpleTestCase):

    def test_normalized_adjacency_matches_dense_formula(self):
        edges = [(0, 1), (1, 2), (2, 0), (2, 3)]
        graph = build_graph(5, edges)

        adjacency = np.zeros((5, 5))
        for u, v in edges:
            adjacency[u, v] = adjacency[v, u] = 1
        degree = adjacency.sum(axis=1)
        scale = np.zeros(5)
        scale[degree > 0] = 1 / np.sqrt(degree[degree > 0])
        expected = scale[:, None] * adjacency * scale[None, :]

        assert_allclose(graph.norm_adjacency.toarray(), expected)
        assert_array_equal(graph.degree, [2, 2, 3, 1, 0])

    def test_self_loops_and_duplicates_are_dropped(self):
        graph = build_graph(3, [(0, 1), (1, 0), (0, 1), (2, 2)])
        self.assertEqual(graph.n_edges, 1)
        assert_array_equal(graph.edges, [[0, 1]])
        assert_array_equal(graph.degree, [1, 1, 0])

    def test_isolated_rows_are_empty(self):
        graph = build_graph(4, [(0, 1)])
        assert_array_equal(graph.isolated_nodes(), [2, 3])
        self.assertEqual(graph.norm_adjacency[2].nnz, 0)

    def test_graph_without_edges(self):
        graph = build_graph(3, [])
        self.assertEqual(graph.n_edges, 0)
        self.assertEqual(graph.norm_adjacency.nnz, 0)

    def test_out_of_range_endpoint(self):
        with self.assertRaises(InputError):
            build_graph(3, [(0, 3)])
        with self.assertRaises(InputError):
            build_graph(3, [(-1, 0)])

    def test_empty_node_set(self):
        with self.assertRaises(InputError):
            build_graph(0, [])

    def test_arrays_are_read_only(self):
        graph = build_graph(3, ring(3))
        with self.assertRaises(ValueError):
            graph.degree[0] = 7

    def test_neighbors(self):
        graph = build_graph(4, [(0, 2), (0, 1), (3, 0)])
        assert_array_equal(graph.neighbors(0), [1, 2, 3])
        assert_array_equal(graph.neighbors(1), [0])
        with self.assertRaises(InputError):
            graph.neighbors(4)


class KnownSetTests(SimpleTestCase):

    def test_indices_are_sorted_and_unique(self):
        known = KnownSet([3, 1, 3], 5)
        assert_array_equal(known.known, [1, 3])
        assert_array_equal(known.unknown, [0, 2, 4])
        assert_array_equal(known.mask, [False, True, False, True, False])
        self.assertEqual(len(known), 2)

    def test_from_mask_round_trip(self):
        mask = np.array([True, False, True, True])
        assert_array_equal(KnownSet.from_mask(mask).mask, mask)

    def test_out_of_range(self):
        with self.assertRaises(InputError):
            KnownSet([5], 5)

    def test_rejects_non_integer_indices(self):
        with self.assertRaises(InputError):
            KnownSet([0.5], 3)


class FeatureMatrixTests(SimpleTestCase):

    def test_vector_becomes_column(self):
        self.assertEqual(as_feature_matrix([1, 2, 3]).shape, (3, 1))

    def test_rejects_nan(self):
        with self.assertRaises(InputError):
            as_feature_matrix([[1.0, np.nan]])

    def test_row_count_must_match(self):
        with self.assertRaises(InputError):
            as_feature_matrix(np.zeros((2, 2)), n_nodes=3)


class OperationTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(7)
        edges = rng.integers(0, 200, size=(800, 2))
        self.graph = build_graph(200, edges)
        self.x = rng.standard_normal((200, 6))

    def test_propagate_is_sparse_product(self):
        expected = self.graph.norm_adjacency.toarray() @ self.x
        assert_allclose(propagate(self.graph, self.x), expected)

    def test_threaded_propagate_is_bit_identical(self):
        single = propagate(self.graph, self.x)
        for threads in (2, 3, 8):
            assert_array_equal(propagate(self.graph, self.x, threads=threads), single)

    def test_column_means(self):
        assert_allclose(column_means(self.x), self.x.mean(axis=0))
        with self.assertRaises(InputError):
            column_means(np.zeros((0, 3)))

    def test_degree_summaries(self):
        graph = build_graph(5, [(0, 1), (0, 2), (0, 3)])
        values, counts = degree_histogram(graph)
        assert_array_equal(values, [0, 1, 3])
        assert_array_equal(counts, [1, 3, 1])
        self.assertAlmostEqual(low_degree_fraction(graph, threshold=1), 0.8)

    def test_worked_examples(self):
        path = build_graph(2, [(0, 1)])
        assert_array_equal(propagate(path, np.array([[1.0], [0.0]])), [[0.0], [1.0]])
        triangle = build_graph(3, ring(3))
        assert_allclose(propagate(triangle, np.array([[1.0], [0.0], [0.0]])), [[0.0], [0.5], [0.5]])
        assert_array_equal(propagate(triangle, np.zeros((3, 2))), np.zeros((3, 2)))

    def test_linearity(self):
        rng = np.random.default_rng(3)
        y = rng.standard_normal(self.x.shape)
        a, b = 1.7, -0.4
        combined = propagate(self.graph, a * self.x + b * y)
        separate = a * propagate(self.graph, self.x) + b * propagate(self.graph, y)
        assert_allclose(combined, separate, rtol=0, atol=1e-12)

    def test_uniform_degree_preserves_constants(self):
        for n in (3, 10, 51):
            assert_allclose(propagate(build_graph(n, ring(n)), np.ones((n, 2))), np.ones((n, 2)))

    def test_spectral_radius_at_most_one(self):
        rng = np.random.default_rng(5)
        graphs = [self.graph, build_graph(3, ring(3)), build_graph(12, [(0, i) for i in range(1, 8)])]
        for graph in graphs:
            v = rng.random((graph.n_nodes, 1)) + 0.1
            radius = 0.0
            for _ in range(500):
                w = propagate(graph, v / np.linalg.norm(v))
                radius, v = np.linalg.norm(w), w
            self.assertLessEqual(radius, 1 + 1e-9)

    def test_threaded_row_blocks_are_kept_on_the_graph(self):
        graph = build_graph(200, ring(200))
        self.assertEqual(graph.row_block_cache, {})
        propagate(graph, self.x, threads=4)
        blocks = graph.row_block_cache[4]
        self.assertEqual(sum(rows.shape[0] for _, _, rows in blocks), 200)
        propagate(graph, self.x, threads=4)
        self.assertIs(graph.row_block_cache[4], blocks)
