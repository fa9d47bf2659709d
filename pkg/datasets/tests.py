import os
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_array_equal

from core.exceptions import EXIT_PARSE, InputError, ParseError
from datasets.formats import ARBF_HEADER, ARBF_MAGIC
from datasets.generators import generate_features, generate_longtail_graph
from datasets.loaders import (
    infer_kind,
    load_dataset,
    load_edge_list,
    load_feature_matrix,
    load_labels,
    load_node_indices,
    remap_edge_list,
)
from datasets.writers import (
    atomic_write,
    encode_features,
    render_report,
    save_edge_list,
    save_features,
    save_features_text,
    save_id_map,
)
from evaluation.metrics import BINARY, CONTINUOUS, recall_at_k
from graphs.graph import build_graph


class TempDirMixin:

    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.dir = Path(self._tmp.name)

    def write(self, name, content):
        path = self.dir / name
        if isinstance(content, bytes):
            path.write_bytes(content)
        else:
            path.write_text(content)
        return path


class EdgeListTests(TempDirMixin, SimpleTestCase):

    def test_plain_pairs(self):
        path = self.write("g.txt", "# comment\n0 1\n\n1 2\n")
        self.assertEqual(load_edge_list(path), (3, [(0, 1), (1, 2)]))

    def test_header_fixes_node_count(self):
        path = self.write("g.txt", "N 5\n0 1\n")
        self.assertEqual(load_edge_list(path), (5, [(0, 1)]))

    def test_header_after_edges(self):
        path = self.write("g.txt", "0 1\nN 5\n")
        with self.assertRaises(ParseError) as caught:
            load_edge_list(path)
        self.assertEqual(caught.exception.line, 2)

    def test_edge_beyond_header(self):
        path = self.write("g.txt", "N 2\n0 2\n")
        with self.assertRaises(ParseError):
            load_edge_list(path)

    def test_bad_tokens_report_the_line(self):
        for content, line in [("0 1\n1 x\n", 2), ("0 1 2\n", 1), ("-1 0\n", 1), ("0 99999999999999999999\n", 1)]:
            path = self.write("g.txt", content)
            with self.assertRaises(ParseError) as caught:
                load_edge_list(path)
            self.assertEqual(caught.exception.line, line)
            self.assertIn(f"line {line}", str(caught.exception))
            self.assertEqual(caught.exception.exit_code, EXIT_PARSE)

    def test_missing_file(self):
        with self.assertRaises(ParseError):
            load_edge_list(self.dir / "absent.txt")

    def test_invalid_utf8(self):
        path = self.write("g.txt", b"0 1\n\xff\xfe\n")
        with self.assertRaises(ParseError) as caught:
            load_edge_list(path)
        self.assertEqual(caught.exception.offset, 4)

    def test_empty_file(self):
        with self.assertRaises(ParseError):
            load_edge_list(self.write("g.txt", "# nothing\n"))

    def test_remap_arbitrary_ids(self):
        path = self.write("g.txt", "alice bob\nbob 42\n")
        n_nodes, edges, id_map = remap_edge_list(path)
        self.assertEqual(n_nodes, 3)
        self.assertEqual(edges, [(0, 1), (1, 2)])
        self.assertEqual(id_map, {"alice": 0, "bob": 1, "42": 2})

    def test_save_then_load(self):
        graph = build_graph(6, [(0, 1), (4, 2)])
        path = self.dir / "out.txt"
        save_edge_list(path, graph)
        n_nodes, edges = load_edge_list(path)
        self.assertEqual(n_nodes, 6)
        assert_array_equal(build_graph(n_nodes, edges).edges, graph.edges)


class FeatureMatrixTests(TempDirMixin, SimpleTestCase):

    def test_delimiters(self):
        for content in ("1,2\n3,4\n", "1\t2\n3\t4\n", "1 2\n3   4\n"):
            path = self.write("x.txt", content)
            assert_array_equal(load_feature_matrix(path), [[1, 2], [3, 4]])

    def test_ragged_row(self):
        path = self.write("x.txt", "1,2\n3\n")
        with self.assertRaises(ParseError) as caught:
            load_feature_matrix(path)
        self.assertEqual(caught.exception.line, 2)

    def test_non_numeric_and_nan(self):
        for content in ("1,a\n", "1,nan\n"):
            with self.assertRaises(ParseError):
                load_feature_matrix(self.write("x.txt", content))

    def test_binary_round_trip_is_exact(self):
        matrix = np.random.default_rng(0).standard_normal((7, 3))
        path = self.dir / "x.arbf"
        save_features(path, matrix)
        assert_array_equal(load_feature_matrix(path), matrix)

    def test_binary_detected_by_magic(self):
        path = self.write("x.bin", encode_features(np.ones((2, 2))))
        assert_array_equal(load_feature_matrix(path), np.ones((2, 2)))

    def test_binary_layout(self):
        payload = encode_features(np.arange(6, dtype=float).reshape(3, 2))
        self.assertEqual(payload[:4], ARBF_MAGIC)
        self.assertEqual(len(payload), ARBF_HEADER.size + 6 * 8)
        self.assertEqual(ARBF_HEADER.unpack_from(payload)[2:], (3, 2))

    def test_binary_errors_report_offsets(self):
        good = encode_features(np.ones((2, 2)))
        cases = [
            (b"ARBF", 4),
            (b"XXXX" + good[4:], 0),
            (good[:4] + b"\x07" + good[5:], 4),
            (good[:-8], ARBF_HEADER.size),
        ]
        for payload, offset in cases:
            path = self.write("x.arbf", payload)
            with self.assertRaises(ParseError) as caught:
                load_feature_matrix(path)
            self.assertEqual(caught.exception.offset, offset)

    def test_binary_non_finite_offset(self):
        for value in (np.nan, np.inf, -np.inf):
            matrix = np.ones((2, 2))
            matrix[1, 0] = value
            path = self.write("x.arbf", encode_features(matrix))
            with self.assertRaises(ParseError) as caught:
                load_feature_matrix(path)
            self.assertEqual(caught.exception.offset, ARBF_HEADER.size + 16)
            self.assertEqual(caught.exception.exit_code, EXIT_PARSE)

    def test_text_writer_round_trip(self):
        matrix = np.array([[0.1, 1e-300], [-2.5, 3.0]])
        path = self.dir / "x.csv"
        save_features_text(path, matrix)
        assert_array_equal(load_feature_matrix(path), matrix)


class DatasetTests(TempDirMixin, SimpleTestCase):

    def test_labels_and_indices(self):
        assert_array_equal(load_labels(self.write("y.txt", "0\n2\n1\n")), [0, 2, 1])
        assert_array_equal(load_node_indices(self.write("k.txt", "3\n1\n")), [3, 1])
        with self.assertRaises(ParseError):
            load_labels(self.write("y.txt", "0\n-1\n"))
        with self.assertRaises(ParseError):
            load_labels(self.write("y.txt", "0\none\n"))

    def test_kind_inference(self):
        self.assertEqual(infer_kind(np.eye(2)), BINARY)
        self.assertEqual(infer_kind(np.full((2, 2), 0.5)), CONTINUOUS)

    def test_load_dataset(self):
        graph = self.write("g.txt", "0 1\n1 2\n")
        features = self.write("x.txt", "1,0\n0,1\n1,1\n0,0\n")
        labels = self.write("y.txt", "0\n1\n0\n1\n")
        bundle, id_map = load_dataset(graph, features, labels)
        self.assertIsNone(id_map)
        self.assertEqual(bundle.graph.n_nodes, 4)
        assert_array_equal(bundle.graph.isolated_nodes(), [3])
        self.assertEqual(bundle.feature_kind, BINARY)

    def test_row_count_mismatch(self):
        graph = self.write("g.txt", "N 5\n0 1\n")
        features = self.write("x.txt", "1,0\n0,1\n")
        with self.assertRaises(ParseError):
            load_dataset(graph, features)

    def test_explicit_binary_kind_rejects_real_values(self):
        graph = self.write("g.txt", "0 1\n")
        features = self.write("x.txt", "0.5,0\n0,1\n")
        with self.assertRaises(ParseError):
            load_dataset(graph, features, kind=BINARY)

    def test_remapped_dataset(self):
        graph = self.write("g.txt", "a b\nb c\n")
        features = self.write("x.txt", "1,0\n0,1\n1,1\n")
        bundle, id_map = load_dataset(graph, features, remap=True)
        self.assertEqual(id_map, {"a": 0, "b": 1, "c": 2})
        save_id_map(self.dir / "ids.tsv", id_map)
        self.assertEqual((self.dir / "ids.tsv").read_text(), "a\t0\nb\t1\nc\t2\n")


class WriterTests(TempDirMixin, SimpleTestCase):

    def test_failed_write_keeps_previous_file(self):
        path = self.write("report.json", "old")
        with mock.patch("datasets.writers.os.replace", side_effect=OSError(28, "No space left on device")):
            with self.assertRaises(OSError):
                atomic_write(path, "new")
        self.assertEqual(path.read_text(), "old")
        self.assertEqual(os.listdir(self.dir), ["report.json"])

    def test_render_json_is_sorted(self):
        self.assertEqual(render_report({"b": 1, "a": {"y": 2, "x": 1}}), (
            '{\n  "a": {\n    "x": 1,\n    "y": 2\n  },\n  "b": 1\n}\n'
        ))

    def test_render_text_flattens(self):
        self.assertEqual(render_report({"b": 1, "a": {"10": 0.5}}, "text"), "a.10=0.5\nb=1\n")


class GeneratorTests(SimpleTestCase):

    def test_long_tail_shape(self):
        graph, (values, counts) = generate_longtail_graph(2000, mean_degree=4.0, isolated_fraction=0.1, seed=0)
        self.assertGreaterEqual(graph.isolated_nodes().size, 200)
        self.assertEqual(counts.sum(), 2000)
        self.assertGreater(graph.degree.max(), 5 * graph.degree.mean())
        self.assertGreater(np.median(graph.degree[graph.degree > 0]), 0)

    def test_seeded(self):
        first, _ = generate_longtail_graph(300, seed=4)
        second, _ = generate_longtail_graph(300, seed=4)
        assert_array_equal(first.edges, second.edges)

    def test_argument_checks(self):
        for kwargs in ({"n_nodes": 5}, {"n_nodes": 100, "isolated_fraction": 0.9},
                       {"n_nodes": 100, "powerlaw_exponent": 1.0}):
            with self.assertRaises(InputError):
                generate_longtail_graph(**kwargs)

    def test_binary_features_have_fixed_density(self):
        graph, _ = generate_longtail_graph(200, seed=2)
        features, labels = generate_features(graph, n_features=20, kind=BINARY, seed=2, density=0.1, n_communities=4)
        assert_array_equal(features.sum(axis=1), np.full(200, 2.0))
        self.assertEqual(labels.shape, (200,))
        self.assertTrue(set(np.unique(labels)) <= {0, 1, 2, 3})

    def test_continuous_features(self):
        graph, _ = generate_longtail_graph(200, seed=2)
        features, _ = generate_features(graph, n_features=8, kind=CONTINUOUS, seed=2)
        self.assertEqual(features.shape, (200, 8))
        self.assertEqual(infer_kind(features), CONTINUOUS)

    def test_communities_follow_the_graph(self):
        graph, _ = generate_longtail_graph(1000, mean_degree=4.0, isolated_fraction=0.0, seed=6)
        _, labels = generate_features(graph, seed=6)
        same = labels[graph.edges[:, 0]] == labels[graph.edges[:, 1]]
        self.assertGreater(same.mean(), 0.4)

    def test_global_mean_does_not_rank_every_node(self):
        graph, _ = generate_longtail_graph(1000, mean_degree=4.0, seed=3)
        features, labels = generate_features(graph, n_features=32, kind=BINARY, seed=3)
        global_mean = np.tile(features.mean(axis=0), (graph.n_nodes, 1))
        community_mean = np.array([features[labels == label].mean(axis=0) for label in labels])

        global_recall = recall_at_k(global_mean, features, 10)
        community_recall = recall_at_k(community_mean, features, 10)
        self.assertLess(global_recall, 0.85)
        self.assertGreater(community_recall, global_recall + 0.15)
