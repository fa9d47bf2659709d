import math

import numpy as np
from django.test import SimpleTestCase, tag
from numpy.testing import assert_array_equal

from core.exceptions import DegenerateError, InputError
from datasets.generators import generate_features, generate_longtail_graph
from evaluation.experiment import (
    SplitSpec,
    SweepRow,
    evaluate_classification,
    make_objective,
    make_split,
    mask_features,
    run_depth_sweep,
    run_missing_rate_sweep,
    run_sensitivity_grid,
    search_hyperparams,
    train_linear_classifier,
)
from evaluation.metrics import (
    BINARY,
    CONTINUOUS,
    EvalReport,
    corr,
    evaluate_reconstruction,
    ndcg_at_k,
    recall_at_k,
    rmse,
)
from evaluation.serializers import EvalReportSerializer, SearchStateSerializer, SweepRowSerializer
from graphs.graph import KnownSet
from propagation.engines import ArbConfig, reconstruct


def brute_force_ndcg(scores, truth, k):
    values = []
    for row_scores, row_truth in zip(scores, truth):
        if row_truth.sum() == 0:
            continue
        ranked = sorted(range(len(row_scores)), key=lambda d: (-row_scores[d], d))[:k]
        dcg = sum(row_truth[d] / math.log2(rank + 2) for rank, d in enumerate(ranked))
        ideal = sum(1 / math.log2(rank + 2) for rank in range(int(min(row_truth.sum(), k))))
        values.append(dcg / ideal)
    return sum(values) / len(values)


def brute_force_recall(scores, truth, k):
    values = []
    for row_scores, row_truth in zip(scores, truth):
        if row_truth.sum() == 0:
            continue
        ranked = sorted(range(len(row_scores)), key=lambda d: (-row_scores[d], d))[:k]
        values.append(sum(row_truth[d] for d in ranked) / row_truth.sum())
    return sum(values) / len(values)


class RankingMetricTests(SimpleTestCase):

    def test_single_hit_at_rank_two(self):
        truth = np.array([[1.0, 0.0, 0.0]])
        predicted = np.array([[0.1, 0.9, 0.0]])
        self.assertAlmostEqual(ndcg_at_k(predicted, truth, 2), 1 / math.log2(3))
        self.assertAlmostEqual(ndcg_at_k(predicted, truth, 2), 0.6309, places=4)
        self.assertEqual(recall_at_k(predicted, truth, 2), 1.0)
        self.assertEqual(recall_at_k(predicted, truth, 1), 0.0)

    def test_perfect_ranking_scores_one(self):
        truth = np.array([[0, 1, 1, 0], [1, 0, 0, 0]], dtype=float)
        self.assertEqual(ndcg_at_k(truth, truth, 2), 1.0)
        self.assertEqual(recall_at_k(truth, truth, 2), 1.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        truth = (rng.random((40, 12)) < 0.25).astype(float)
        predicted = np.round(rng.random((40, 12)), 1)
        for k in (1, 3, 5, 12):
            self.assertAlmostEqual(ndcg_at_k(predicted, truth, k), brute_force_ndcg(predicted, truth, k))
            self.assertAlmostEqual(recall_at_k(predicted, truth, k), brute_force_recall(predicted, truth, k))

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            n_features = int(rng.integers(1, 13))
            truth = (rng.random((6, n_features)) < 0.3).astype(float)
            truth[0, rng.integers(n_features)] = 1.0
            predicted = np.round(rng.random((6, n_features)), 1)
            k = int(rng.integers(1, n_features + 1))
            self.assertAlmostEqual(ndcg_at_k(predicted, truth, k), brute_force_ndcg(predicted, truth, k), places=12)
            self.assertAlmostEqual(recall_at_k(predicted, truth, k), brute_force_recall(predicted, truth, k), places=12)

    def test_monotone_rescaling_changes_nothing(self):
        rng = np.random.default_rng(8)
        truth = (rng.random((30, 10)) < 0.3).astype(float)
        truth[:, 0] = 1.0
        predicted = rng.random((30, 10))
        for transformed in (predicted ** 3, 5 * np.log1p(predicted) - 2):
            for k in (1, 4, 10):
                self.assertEqual(recall_at_k(transformed, truth, k), recall_at_k(predicted, truth, k))
                self.assertEqual(ndcg_at_k(transformed, truth, k), ndcg_at_k(predicted, truth, k))

    def test_permuting_dimensions_changes_nothing(self):
        rng = np.random.default_rng(9)
        truth = (rng.random((30, 8)) < 0.4).astype(float)
        truth[:, 3] = 1.0
        predicted = rng.random((30, 8))
        columns = rng.permutation(8)
        for k in (1, 3, 8):
            self.assertAlmostEqual(recall_at_k(predicted[:, columns], truth[:, columns], k),
                                   recall_at_k(predicted, truth, k), places=12)
            self.assertAlmostEqual(ndcg_at_k(predicted[:, columns], truth[:, columns], k),
                                   ndcg_at_k(predicted, truth, k), places=12)

    def test_ties_break_by_lower_dimension(self):
        truth = np.array([[0.0, 1.0, 0.0]])
        predicted = np.array([[0.5, 0.5, 0.5]])
        self.assertEqual(recall_at_k(predicted, truth, 1), 0.0)
        self.assertEqual(recall_at_k(predicted, truth, 2), 1.0)

    def test_all_zero_rows_are_skipped(self):
        truth = np.array([[0.0, 0.0], [1.0, 0.0]])
        predicted = np.array([[1.0, 0.0], [1.0, 0.0]])
        self.assertEqual(recall_at_k(predicted, truth, 1), 1.0)

    def test_no_evaluable_nodes(self):
        with self.assertRaises(InputError):
            recall_at_k(np.ones((2, 3)), np.zeros((2, 3)), 1)

    def test_bad_k(self):
        truth = np.array([[1.0, 0.0]])
        for k in (0, 3):
            with self.assertRaises(InputError):
                ndcg_at_k(truth, truth, k)

    def test_non_binary_truth(self):
        with self.assertRaises(InputError):
            recall_at_k(np.ones((1, 2)), np.array([[0.5, 1.0]]), 1)


class ContinuousMetricTests(SimpleTestCase):

    def test_rmse(self):
        self.assertAlmostEqual(rmse([[1.0, 2.0]], [[1.0, 4.0]]), math.sqrt(2.0))
        self.assertEqual(rmse(np.ones((3, 2)), np.ones((3, 2))), 0.0)

    def test_corr_per_node(self):
        truth = np.array([[1.0, 2.0, 3.0], [3.0, 1.0, 2.0]])
        predicted = np.array([[2.0, 4.0, 6.0], [-3.0, -1.0, -2.0]])
        self.assertAlmostEqual(corr(predicted, truth), 0.0)
        self.assertAlmostEqual(corr(predicted[:1], truth[:1]), 1.0)

    def test_corr_constant_rows_count_as_zero(self):
        truth = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
        predicted = np.array([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]])
        self.assertAlmostEqual(corr(predicted, truth), 0.5)

    def test_corr_needs_two_dimensions(self):
        with self.assertRaises(InputError):
            corr(np.ones((3, 1)), np.ones((3, 1)))

    def test_shape_mismatch(self):
        with self.assertRaises(InputError):
            rmse(np.ones((2, 2)), np.ones((2, 3)))


class EvaluateReconstructionTests(SimpleTestCase):

    def test_binary_report_skips_large_k(self):
        truth = np.eye(6)
        with self.assertLogs("evaluation.metrics", level="WARNING"):
            report = evaluate_reconstruction(truth, truth, nodes=[0, 1, 2], kind=BINARY, k_list=(1, 5, 10))
        self.assertEqual(sorted(report.recall_at), [1, 5])
        self.assertEqual(report.n_eval_nodes, 3)
        self.assertIsNone(report.rmse)

    def test_continuous_report(self):
        rng = np.random.default_rng(0)
        truth = rng.random((10, 4))
        report = evaluate_reconstruction(truth, truth, kind=CONTINUOUS)
        self.assertEqual(report.rmse, 0.0)
        self.assertAlmostEqual(report.corr, 1.0)
        self.assertEqual(report.recall_at, {})

    def test_flat_keys(self):
        report = EvalReport(recall_at={20: 0.5, 10: 0.4}, ndcg_at={10: 0.3}, n_eval_nodes=4, accuracy=0.7)
        self.assertEqual(
            list(report.as_flat()),
            ["feature_kind", "n_eval_nodes", "recall@10", "recall@20", "ndcg@10", "accuracy"],
        )

    def test_empty_node_set(self):
        with self.assertRaises(InputError):
            evaluate_reconstruction(np.eye(3), np.eye(3), nodes=[], kind=BINARY)


class SplitTests(SimpleTestCase):

    def test_default_proportions(self):
        known, val, test = make_split(100, SplitSpec(seed=4))
        self.assertEqual((len(known), val.size, test.size), (40, 10, 50))
        everything = np.concatenate([known.known, val, test])
        assert_array_equal(np.sort(everything), np.arange(100))

    def test_seeded_split_is_reproducible(self):
        first = make_split(50, SplitSpec(seed=9))
        second = make_split(50, SplitSpec(seed=9))
        for a, b in zip((first[0].known, first[1], first[2]), (second[0].known, second[1], second[2])):
            assert_array_equal(a, b)
        self.assertFalse(np.array_equal(make_split(50, SplitSpec(seed=10))[0].known, first[0].known))

    def test_too_small(self):
        with self.assertRaises(InputError):
            make_split(9, SplitSpec())

    def test_extreme_fraction_leaves_empty_cell(self):
        with self.assertRaises(InputError):
            make_split(10, SplitSpec(known_fraction=0.95))

    def test_spec_validation(self):
        with self.assertRaises(InputError):
            SplitSpec(known_fraction=1.0)
        with self.assertRaises(InputError):
            SplitSpec(val_test_ratio=(0, 1))

    def test_mask_features(self):
        z = np.arange(6, dtype=float).reshape(3, 2)
        masked = mask_features(z, KnownSet([1], 3))
        assert_array_equal(masked, [[0, 0], [2, 3], [0, 0]])


class SearchTests(SimpleTestCase):

    def bowl(self, optimum, calls=None):
        def objective(alpha, beta):
            if calls is not None:
                calls.append((alpha, beta))
            return -((alpha - optimum[0]) ** 2 + (beta - optimum[1]) ** 2)

        return objective

    def quadratic(self, calls=None):
        return self.bowl((0.3, 0.7), calls)

    def test_finds_the_optimum_of_a_smooth_bowl(self):
        calls = []
        best, state = search_hyperparams(self.quadratic(calls))
        self.assertLessEqual(abs(best[0] - 0.3), 1 / 32)
        self.assertLessEqual(abs(best[1] - 0.7), 1 / 32)
        self.assertLessEqual(len(calls), 120)
        self.assertEqual(len(set(calls)), len(calls))
        self.assertLess(state.step, 1 / 64)

    def test_random_optima(self):
        rng = np.random.default_rng(13)
        for optimum in rng.uniform(0.02, 0.98, size=(20, 2)):
            calls = []
            best, _ = search_hyperparams(self.bowl(optimum, calls), max_evals=120)
            self.assertLessEqual(len(calls), 120)
            self.assertLessEqual(np.max(np.abs(np.array(best) - optimum)), 1 / 32)

    def test_is_deterministic(self):
        first, first_state = search_hyperparams(self.quadratic())
        second, second_state = search_hyperparams(self.quadratic())
        self.assertEqual(first, second)
        self.assertEqual(first_state.evaluations, second_state.evaluations)

    def test_candidates_stay_in_range(self):
        calls = []
        search_hyperparams(lambda a, b: calls.append((a, b)) or a + b, max_evals=60)
        for alpha, beta in calls:
            self.assertTrue(1 / 64 <= alpha <= 1 and 1 / 64 <= beta <= 1)

    def test_boundary_optimum(self):
        best, _ = search_hyperparams(lambda a, b: a + b)
        self.assertEqual(best, (1.0, 1.0))

    def test_respects_the_budget(self):
        calls = []
        search_hyperparams(self.quadratic(calls), max_evals=10)
        self.assertLessEqual(len(calls), 10)

    def test_non_finite_scores_never_win(self):
        def objective(alpha, beta):
            return float("nan") if alpha > 0.5 else alpha

        with self.assertLogs("evaluation.experiment", level="WARNING"):
            best, state = search_hyperparams(objective)
        self.assertLessEqual(best[0], 0.5)
        self.assertTrue(math.isfinite(state.best_score))

    def test_bad_arguments(self):
        with self.assertRaises(InputError):
            search_hyperparams(self.quadratic(), initial_step=0)


class ClassifierTests(SimpleTestCase):

    def test_separable_features(self):
        rng = np.random.default_rng(2)
        labels = rng.integers(3, size=300)
        features = np.eye(3)[labels] * 3 + 0.1 * rng.standard_normal((300, 3))
        self.assertGreater(train_linear_classifier(features, labels), 0.95)

    def test_noise_is_near_chance(self):
        rng = np.random.default_rng(3)
        labels = rng.integers(2, size=400)
        features = rng.standard_normal((400, 5))
        self.assertTrue(0.3 < train_linear_classifier(features, labels) < 0.7)

    def test_chance_level_over_seeds(self):
        n_samples, n_classes = 400, 4
        scores = []
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            labels = rng.integers(n_classes, size=n_samples)
            features = rng.standard_normal((n_samples, 5))
            scores.append(train_linear_classifier(features, labels, seed=seed))
        chance = 1 / n_classes
        sigma = math.sqrt(chance * (1 - chance) / n_samples)
        self.assertLessEqual(abs(np.mean(scores) - chance), 3 * sigma)

    def test_duplicated_label_one_hot_is_perfect(self):
        labels = np.random.default_rng(4).integers(3, size=150)
        onehot = np.eye(3)[labels]
        self.assertEqual(train_linear_classifier(np.hstack([onehot, onehot]), labels), 1.0)

    def test_single_class(self):
        with self.assertRaises(DegenerateError):
            train_linear_classifier(np.ones((10, 2)), np.zeros(10, dtype=int))

    def test_too_few_members_for_the_folds(self):
        with self.assertRaises(InputError):
            train_linear_classifier(np.eye(4), np.array([0, 0, 1, 1]), folds=5)

    def test_only_selected_rows_are_used(self):
        labels = np.array([0, 1] * 50)
        features = np.eye(2)[labels]
        features[:10] = 0
        accuracy = evaluate_classification(features, labels, np.arange(10, 100))
        self.assertGreater(accuracy, 0.95)


class SyntheticDataMixin:

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.graph, _ = generate_longtail_graph(300, mean_degree=5.0, seed=1)
        cls.features, cls.labels = generate_features(cls.graph, n_features=16, kind=BINARY, seed=1)


class ObjectiveTests(SyntheticDataMixin, SimpleTestCase):

    def test_objective_scores_validation_nodes(self):
        known, val, _ = make_split(self.graph.n_nodes, SplitSpec(seed=0))
        objective = make_objective(self.graph, self.features, known, val, BINARY, "arb", 10, 0.0)
        score = objective(0.5, 0.5)
        self.assertTrue(0.0 <= score <= 1.0)
        self.assertEqual(score, objective(0.5, 0.5))


class SweepTests(SyntheticDataMixin, SimpleTestCase):

    def test_missing_rate_sweep_shape(self):
        rows = run_missing_rate_sweep(
            self.graph, self.features, self.labels, rates=(0.4, 0.9), engines=("fp", "arb"), seed=3,
            k_list=(5, 10),
        )
        self.assertEqual(
            [(row.rate, row.engine) for row in rows],
            [(0.4, "fp"), (0.4, "arb"), (0.9, "fp"), (0.9, "arb")],
        )
        for row in rows:
            self.assertIsNone(row.error)
            self.assertEqual(sorted(row.report.ndcg_at), [5, 10])
            self.assertIsNotNone(row.report.accuracy)

    def test_sweep_is_reproducible(self):
        first = run_missing_rate_sweep(self.graph, self.features, rates=(0.6,), engines=("arb",), seed=5)
        second = run_missing_rate_sweep(self.graph, self.features, rates=(0.6,), engines=("arb",), seed=5)
        self.assertEqual(first[0].report.as_flat(), second[0].report.as_flat())

    def test_failing_cell_is_recorded(self):
        single_class = np.zeros(self.graph.n_nodes, dtype=np.int64)
        with self.assertLogs("evaluation.experiment", level="WARNING"):
            rows = run_missing_rate_sweep(self.graph, self.features, single_class, rates=(0.5,), engines=("fp",))
        self.assertIsNotNone(rows[0].error)

    def test_search_runs_per_cell(self):
        rows = run_missing_rate_sweep(
            self.graph, self.features, rates=(0.5, 0.8), engines=("fp", "arb", "arb-no-bc"), seed=1,
            search={"max_evals": 10},
        )
        self.assertTrue(all(row.error is None for row in rows))
        fp = [row for row in rows if row.engine == "fp"]
        self.assertTrue(all((row.alpha, row.beta) == (1.0, 1.0) for row in fp))
        for row in rows:
            self.assertTrue(0 < row.alpha <= 1 and 0 < row.beta <= 1)
            if row.engine == "arb-no-bc":
                self.assertEqual(row.beta, 1.0)

        again = run_missing_rate_sweep(
            self.graph, self.features, rates=(0.5, 0.8), engines=("fp", "arb", "arb-no-bc"), seed=1,
            search={"max_evals": 10},
        )
        self.assertEqual([(row.alpha, row.beta) for row in rows], [(row.alpha, row.beta) for row in again])

    def test_fixed_weights_are_recorded(self):
        configs = {"arb": ArbConfig(0.7, 0.2), "arb-no-ve": ArbConfig(0.7, 0.2)}
        rows = run_missing_rate_sweep(self.graph, self.features, rates=(0.5,), engines=("arb", "arb-no-ve"),
                                      configs=configs)
        self.assertEqual([(row.alpha, row.beta) for row in rows], [(0.7, 0.2), (1.0, 0.2)])

    def test_sensitivity_grid(self):
        known, _, test = make_split(self.graph.n_nodes, SplitSpec(seed=4))
        config = ArbConfig(max_iters=15, tolerance=0.0)
        rows = run_sensitivity_grid(self.graph, self.features, known, test, (0.3, 1.0), (0.5, 1.0), config)
        self.assertEqual([(alpha, beta) for alpha, beta, _, _ in rows],
                         [(0.3, 0.5), (0.3, 1.0), (1.0, 0.5), (1.0, 1.0)])
        self.assertTrue(all(iterations == 15 for _, _, _, iterations in rows))

        fp = reconstruct("fp", self.graph, mask_features(self.features, known), known, config)
        expected = evaluate_reconstruction(fp.features, self.features, test, BINARY, (10,))
        self.assertAlmostEqual(rows[-1][2].ndcg_at[10], expected.ndcg_at[10], places=12)

    def test_depth_sweep(self):
        known, _, test = make_split(self.graph.n_nodes, SplitSpec(seed=2))
        rows = run_depth_sweep(self.graph, self.features, known, test, depths=(1, 3, 5), engines=("fp", "arb"))
        self.assertEqual([(depth, engine) for depth, engine, _ in rows],
                         [(1, "fp"), (3, "fp"), (5, "fp"), (1, "arb"), (3, "arb"), (5, "arb")])

    def test_depth_sweep_rejects_zero(self):
        known, _, test = make_split(self.graph.n_nodes, SplitSpec(seed=2))
        with self.assertRaises(InputError):
            run_depth_sweep(self.graph, self.features, known, test, depths=(0, 2))


@tag("slow")
class AblationOrderingTests(SimpleTestCase):

    def searched_recall(self, engine, graph, features, known, val, test):
        if engine == "fp":
            config = ArbConfig()
        else:
            objective = make_objective(graph, features, known, val, BINARY, engine)
            best, _ = search_hyperparams(objective)
            config = ArbConfig(*best)
        result = reconstruct(engine, graph, mask_features(features, known), known, config)
        return recall_at_k(result.features[test], features[test], 10)

    def test_full_engine_beats_both_ablations_which_beat_fp(self):
        ordered = 0
        for seed in range(10):
            graph, _ = generate_longtail_graph(1000, 4.0, 2.5, 0.1, seed)
            features, _ = generate_features(graph, n_features=32, kind=BINARY, seed=seed)
            known, val, test = make_split(graph.n_nodes, SplitSpec(seed=seed, known_fraction=0.4))
            recall = {
                engine: self.searched_recall(engine, graph, features, known, val, test)
                for engine in ("fp", "arb", "arb-no-ve", "arb-no-bc")
            }
            if recall["arb"] >= max(recall["arb-no-ve"], recall["arb-no-bc"]) >= recall["fp"]:
                ordered += 1
        self.assertGreaterEqual(ordered, 8)


class SerializerTests(SimpleTestCase):

    def test_report_drops_empty_metrics(self):
        data = EvalReportSerializer(EvalReport(rmse=0.5, corr=0.1, n_eval_nodes=3, feature_kind=CONTINUOUS)).data
        self.assertEqual(data, {"feature_kind": CONTINUOUS, "n_eval_nodes": 3, "rmse": 0.5, "corr": 0.1})

    def test_search_state(self):
        _, state = search_hyperparams(lambda a, b: a, max_evals=5)
        data = SearchStateSerializer(state).data
        self.assertEqual(set(data), {"best", "best_score", "final_step", "evaluations"})
        self.assertEqual(len(data["evaluations"]), len(state.evaluations))
        self.assertEqual(set(data["best"]), {"alpha", "beta"})

    def test_sweep_row_with_error(self):
        data = SweepRowSerializer(SweepRow(0.9, "fp", error="boom")).data
        self.assertEqual(data["error"], "boom")
        self.assertIsNone(data["report"])
