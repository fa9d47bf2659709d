import csv
import io
import json
import tempfile
from pathlib import Path
from unittest import mock

from django.conf import settings
from django.core.management import call_command, execute_from_command_line
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from cli.serializers import RunConfigSerializer
from core.exceptions import EXIT_PARSE, EXIT_USAGE
from datasets.loaders import load_dataset, load_edge_list, load_feature_matrix, load_labels, load_node_indices
from graphs.graph import KnownSet
from propagation.oracle import solve_fp

FIXTURES = Path(__file__).resolve().parent / "fixtures"


class RunConfigSerializerTests(SimpleTestCase):

    def test_fills_defaults(self):
        serializer = RunConfigSerializer(data={"command": "evaluate"})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        data = serializer.validated_data
        self.assertEqual((data["alpha"], data["beta"]), (0.5, 0.5))
        self.assertEqual(data["k"], [10, 20, 50])
        self.assertEqual(data["engines"], ["arb"])

    def test_comparison_commands_default_to_several_engines(self):
        for command, engines in [("sweep", ["fp", "arb", "arb-no-ve", "arb-no-bc"]), ("bench", ["fp", "arb"])]:
            serializer = RunConfigSerializer(data={"command": command})
            self.assertTrue(serializer.is_valid(), serializer.errors)
            self.assertEqual(serializer.validated_data["engines"], engines)

    def test_rejects_out_of_range_values(self):
        for field, value in [("alpha", 0.0), ("beta", 1.5), ("known_fraction", 1.0), ("rates", [0.5, 1.0])]:
            serializer = RunConfigSerializer(data={"command": "evaluate", field: value})
            self.assertFalse(serializer.is_valid())
            self.assertIn(field, serializer.errors)

    def test_warns_about_ignored_parameters(self):
        with self.assertLogs("cli.serializers", level="WARNING"):
            RunConfigSerializer(data={"command": "evaluate", "engine": "fp", "alpha": 0.3}).is_valid()


class SettingsTests(SimpleTestCase):

    def test_no_database_or_model_apps(self):
        self.assertNotIn("django.contrib.contenttypes", settings.INSTALLED_APPS)
        engines = [db.get("ENGINE", "") for db in settings.DATABASES.values()]
        self.assertFalse(any(engine.endswith("sqlite3") for engine in engines))


class CommandTestCase(SimpleTestCase):
    """Runs commands against a small generated dataset."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls.dir = Path(cls._tmp.name)
        cls.data = cls.dir / "data"
        call_command(
            "gen", "--out", str(cls.data), "--nodes", "300", "--n-features", "16", "--seed", "1",
            stdout=io.StringIO(),
        )
        cls.dataset = [
            "--graph", str(cls.data / "graph.txt"),
            "--features", str(cls.data / "features.arbf"),
        ]

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def run_command(self, *args):
        stdout, stderr = io.StringIO(), io.StringIO()
        call_command(*args, stdout=stdout, stderr=stderr)
        return stdout.getvalue(), stderr.getvalue()


class GenCommandTests(CommandTestCase):

    def test_files_are_consistent(self):
        n_nodes, _ = load_edge_list(self.data / "graph.txt")
        features = load_feature_matrix(self.data / "features.arbf")
        labels = load_labels(self.data / "labels.txt")
        self.assertEqual(n_nodes, 300)
        self.assertEqual(features.shape, (300, 16))
        self.assertEqual(labels.shape, (300,))

    def test_requires_out(self):
        with self.assertRaises(CommandError) as caught:
            self.run_command("gen", "--nodes", "50")
        self.assertEqual(caught.exception.returncode, EXIT_USAGE)


class ReconstructCommandTests(CommandTestCase):

    def test_known_rows_are_kept_by_fp(self):
        known = self.dir / "known.txt"
        known.write_text("".join(f"{i}\n" for i in range(0, 300, 3)))
        out = self.dir / "reconstructed.arbf"
        stdout, _ = self.run_command("reconstruct", *self.dataset, "--engine", "fp", "--known", str(known),
                                     "--out", str(out))
        summary = json.loads(stdout)
        self.assertEqual(summary["engine"], "fp")
        self.assertEqual(summary["n_known"], 100)

        truth = load_feature_matrix(self.data / "features.arbf")
        result = load_feature_matrix(out)
        assert_array_equal(result[::3], truth[::3])

    def test_known_index_out_of_range(self):
        known = self.dir / "bad_known.txt"
        known.write_text("0\n300\n")
        with self.assertRaises(CommandError) as caught:
            self.run_command("reconstruct", *self.dataset, "--known", str(known),
                             "--out", str(self.dir / "unused.arbf"))
        self.assertEqual(caught.exception.returncode, EXIT_PARSE)

    def test_empty_known_file(self):
        known = self.dir / "empty_known.txt"
        known.write_text("# nobody\n")
        with self.assertRaises(CommandError) as caught:
            self.run_command("reconstruct", *self.dataset, "--known", str(known),
                             "--out", str(self.dir / "unused.arbf"))
        self.assertEqual(caught.exception.returncode, EXIT_USAGE)

    def test_every_node_known(self):
        known = self.dir / "all_known.txt"
        known.write_text("".join(f"{i}\n" for i in range(300)))
        out = self.dir / "all.arbf"
        stdout, _ = self.run_command(
            "reconstruct", *self.dataset, "--engine", "fp", "--known", str(known), "--out", str(out),
        )
        self.assertEqual(json.loads(stdout)["n_known"], 300)
        assert_array_equal(load_feature_matrix(out), load_feature_matrix(self.data / "features.arbf"))

    def test_arb_with_unit_weights_matches_fp(self):
        known = self.dir / "unit_known.txt"
        known.write_text("".join(f"{i}\n" for i in range(0, 300, 4)))
        outputs = {}
        for engine, extra in (("fp", []), ("arb", ["--alpha", "1", "--beta", "1"])):
            outputs[engine] = self.dir / f"unit_{engine}.arbf"
            self.run_command("reconstruct", *self.dataset, "--engine", engine, *extra, "--known", str(known),
                             "--iters", "25", "--tol", "0", "--out", str(outputs[engine]))
        assert_allclose(load_feature_matrix(outputs["arb"]), load_feature_matrix(outputs["fp"]), rtol=0, atol=1e-12)

    def test_history_in_summary(self):
        out = self.dir / "history.arbf"
        stdout, _ = self.run_command("reconstruct", *self.dataset, "--iters", "7", "--tol", "0", "--history",
                                     "--out", str(out))
        summary = json.loads(stdout)
        self.assertEqual(len(summary["history"]), 7)
        self.assertEqual(summary["history"][-1], summary["final_delta"])

        stdout, _ = self.run_command("reconstruct", *self.dataset, "--iters", "7", "--out", str(out))
        self.assertNotIn("history", json.loads(stdout))


class GoldenOutputTests(SimpleTestCase):
    """Converged FP on a four node path against a committed harmonic extension."""

    def test_fp_matches_golden_and_dense_solve(self):
        fixture = FIXTURES / "path4"
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "path4.arbf"
            call_command(
                "reconstruct", "--graph", str(fixture / "graph.txt"), "--features", str(fixture / "features.csv"),
                "--known", str(fixture / "known.txt"), "--engine", "fp", "--iters", "80", "--tol", "0",
                "--out", str(out), stdout=io.StringIO(),
            )
            result = load_feature_matrix(out)

        assert_allclose(result, load_feature_matrix(fixture / "fp_golden.csv"), rtol=0, atol=1e-12)
        bundle, _ = load_dataset(fixture / "graph.txt", fixture / "features.csv")
        known = KnownSet(load_node_indices(fixture / "known.txt"), bundle.graph.n_nodes)
        assert_allclose(result, solve_fp(bundle.graph, bundle.features, known), rtol=0, atol=1e-12)


class EvaluateCommandTests(CommandTestCase):

    def test_json_report(self):
        stdout, _ = self.run_command(
            "evaluate", *self.dataset, "--labels", str(self.data / "labels.txt"), "--k", "5,10", "--seed", "2",
        )
        report = json.loads(stdout)
        self.assertEqual(report["feature_kind"], "binary")
        self.assertEqual(set(report["ndcg_at"]), {"5", "10"})
        self.assertEqual(report["n_eval_nodes"], 150)
        self.assertIn("accuracy", report)

    def test_same_seed_same_report(self):
        first, _ = self.run_command("evaluate", *self.dataset, "--k", "5")
        second, _ = self.run_command("evaluate", *self.dataset, "--k", "5")
        self.assertEqual(first, second)

    def test_ground_truth_scores_perfectly(self):
        stdout, _ = self.run_command("evaluate", *self.dataset, "--oracle-input", "--k", "2")
        report = json.loads(stdout)
        self.assertAlmostEqual(report["ndcg_at"]["2"], 1.0)
        self.assertAlmostEqual(report["recall_at"]["2"], 1.0)

    def test_metric_selection(self):
        with self.assertLogs("cli", level="WARNING"):
            stdout, _ = self.run_command("evaluate", *self.dataset, "--k", "5", "--metrics", "ndcg,corr")
        report = json.loads(stdout)
        self.assertIn("ndcg_at", report)
        self.assertNotIn("recall_at", report)
        self.assertNotIn("corr", report)

    def test_text_format_and_report_file(self):
        out = self.dir / "report.txt"
        stdout, _ = self.run_command("evaluate", *self.dataset, "--k", "5", "--format", "text", "--out", str(out))
        self.assertIn("ndcg_at.5=", stdout)
        self.assertEqual(out.read_text(), stdout)

    def test_all_unknown(self):
        stdout, _ = self.run_command("evaluate", *self.dataset, "--k", "5", "--all-unknown")
        self.assertEqual(json.loads(stdout)["n_eval_nodes"], 180)


class SearchCommandTests(CommandTestCase):

    def test_trajectory_and_result(self):
        stdout, stderr = self.run_command("search", *self.dataset, "--max-evals", "12", "--iters", "10")
        result = json.loads(stdout)
        self.assertEqual(result["metric"], "ndcg@10")
        self.assertLessEqual(len(result["evaluations"]), 12)
        self.assertEqual(len(stderr.strip().splitlines()), len(result["evaluations"]))
        self.assertTrue(0 < result["best"]["alpha"] <= 1)


class SweepCommandTests(CommandTestCase):

    def test_table(self):
        stdout, _ = self.run_command("sweep", *self.dataset, "--rates", "0.5,0.9", "--engines", "fp,arb", "--k", "5")
        rows = list(csv.DictReader(io.StringIO(stdout)))
        self.assertEqual([(row["rate"], row["engine"]) for row in rows],
                         [("0.5", "fp"), ("0.5", "arb"), ("0.9", "fp"), ("0.9", "arb")])
        self.assertIn("ndcg@5", rows[0])
        self.assertTrue(all(row["error"] == "" for row in rows))

    def test_every_engine_by_default(self):
        stdout, _ = self.run_command("sweep", *self.dataset, "--rates", "0.6", "--k", "5")
        rows = list(csv.DictReader(io.StringIO(stdout)))
        self.assertEqual([row["engine"] for row in rows], ["fp", "arb", "arb-no-ve", "arb-no-bc"])

    def test_search_picks_weights_per_cell(self):
        stdout, _ = self.run_command(
            "sweep", *self.dataset, "--rates", "0.5,0.8", "--engines", "fp,arb,arb-no-ve", "--k", "5",
            "--iters", "10", "--search", "--max-evals", "12",
        )
        rows = list(csv.DictReader(io.StringIO(stdout)))
        self.assertTrue(all(row["error"] == "" for row in rows))
        by_engine = {(row["rate"], row["engine"]): row for row in rows}
        self.assertEqual((by_engine[("0.5", "fp")]["alpha"], by_engine[("0.5", "fp")]["beta"]), ("1.0", "1.0"))
        for rate in ("0.5", "0.8"):
            self.assertTrue(0 < float(by_engine[(rate, "arb")]["alpha"]) <= 1)
            self.assertEqual(by_engine[(rate, "arb-no-ve")]["alpha"], "1.0")

    def test_fixed_weights_are_reported(self):
        stdout, _ = self.run_command(
            "sweep", *self.dataset, "--rates", "0.5", "--engines", "arb,arb-no-bc", "--k", "5",
            "--alpha", "0.7", "--beta", "0.3",
        )
        rows = list(csv.DictReader(io.StringIO(stdout)))
        self.assertEqual([(row["alpha"], row["beta"]) for row in rows], [("0.7", "0.3"), ("0.7", "1.0")])


class DepthCommandTests(CommandTestCase):

    def test_rows_per_depth_and_engine(self):
        stdout, _ = self.run_command("depth", *self.dataset, "--depths", "1,3,5", "--k", "5")
        rows = list(csv.DictReader(io.StringIO(stdout)))
        self.assertEqual([(row["depth"], row["engine"]) for row in rows],
                         [("1", "fp"), ("3", "fp"), ("5", "fp"), ("1", "arb"), ("3", "arb"), ("5", "arb")])
        self.assertIn("recall@5", rows[0])

    def test_default_depths(self):
        stdout, _ = self.run_command("depth", *self.dataset, "--engines", "fp", "--k", "5")
        rows = list(csv.DictReader(io.StringIO(stdout)))
        self.assertEqual([int(row["depth"]) for row in rows], list(range(1, 11)))


class GridCommandTests(CommandTestCase):

    def test_every_pair_is_scored(self):
        out = self.dir / "grid.csv"
        stdout, _ = self.run_command("grid", *self.dataset, "--grid", "0.5,1", "--k", "5", "--iters", "10",
                                     "--out", str(out))
        rows = list(csv.DictReader(io.StringIO(stdout)))
        self.assertEqual([(row["alpha"], row["beta"]) for row in rows],
                         [("0.5", "0.5"), ("0.5", "1.0"), ("1.0", "0.5"), ("1.0", "1.0")])
        self.assertTrue(all(0 <= float(row["ndcg@5"]) <= 1 for row in rows))
        self.assertEqual(out.read_text(), stdout)

    def test_rejects_values_outside_the_unit_interval(self):
        with self.assertRaises(CommandError) as caught:
            self.run_command("grid", *self.dataset, "--grid", "0,0.5")
        self.assertEqual(caught.exception.returncode, EXIT_USAGE)


class BenchCommandTests(CommandTestCase):

    def test_synthetic_workload(self):
        stdout, _ = self.run_command(
            "bench", "--nodes", "400", "--edges", "1200", "--n-features", "8", "--repeats", "2",
            "--bench-iters", "3",
        )
        result = json.loads(stdout)
        self.assertEqual(set(result["engines"]), {"fp", "arb"})
        self.assertEqual(result["iterations"], 3)
        self.assertIn("arb_over_fp", result)

    def test_dataset_workload(self):
        stdout, _ = self.run_command("bench", *self.dataset, "--repeats", "1", "--bench-iters", "2", "--engines", "arb")
        result = json.loads(stdout)
        self.assertEqual(result["n_nodes"], 300)
        self.assertNotIn("arb_over_fp", result)

    def test_five_repeats_by_default(self):
        stdout, _ = self.run_command(
            "bench", "--nodes", "200", "--edges", "600", "--n-features", "4", "--bench-iters", "2",
        )
        self.assertEqual(json.loads(stdout)["repeats"], 5)


class ExitCodeTests(CommandTestCase):

    def test_missing_file_is_a_parse_error(self):
        with self.assertRaises(CommandError) as caught:
            self.run_command("evaluate", "--graph", str(self.dir / "absent.txt"), "--features", str(self.dir / "x"))
        self.assertEqual(caught.exception.returncode, EXIT_PARSE)

    def test_malformed_graph_is_a_parse_error(self):
        graph = self.dir / "broken.txt"
        graph.write_text("0 1\n1 two\n")
        with self.assertRaises(CommandError) as caught:
            self.run_command("evaluate", "--graph", str(graph), "--features", str(self.data / "features.arbf"))
        self.assertEqual(caught.exception.returncode, EXIT_PARSE)
        self.assertIn("line 2", str(caught.exception))

    def test_invalid_option_values_are_usage_errors(self):
        for args in (["--alpha", "1.5"], ["--alpha", "abc"], ["--engine", "gcn"], ["--bogus"]):
            with self.assertRaises(CommandError) as caught:
                self.run_command("evaluate", *self.dataset, *args)
            self.assertEqual(caught.exception.returncode, EXIT_USAGE)

    def test_missing_dataset_option(self):
        with self.assertRaises(CommandError) as caught:
            self.run_command("evaluate", "--graph", str(self.data / "graph.txt"))
        self.assertEqual(caught.exception.returncode, EXIT_USAGE)

    def test_unknown_flag_on_the_command_line_exits_one(self):
        with mock.patch("sys.stderr", new_callable=io.StringIO) as stderr:
            with self.assertRaises(SystemExit) as caught:
                execute_from_command_line(["manage.py", "evaluate", "--bogus"])
        self.assertEqual(caught.exception.code, EXIT_USAGE)
        self.assertIn("--bogus", stderr.getvalue())
