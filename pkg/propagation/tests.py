import time

import numpy as np
from django.test import SimpleTestCase, override_settings, tag
from numpy.testing import assert_allclose, assert_array_equal

from core.exceptions import CapabilityError, DegenerateError, InputError
from datasets.generators import generate_longtail_graph
from evaluation.experiment import SplitSpec, make_split, mask_features
from graphs.graph import KnownSet, build_graph
from propagation.engines import (
    ArbConfig,
    forward_alpha_beta,
    map_alpha_beta,
    reconstruct,
    run_arb,
    run_boundary_only,
    run_fp,
    run_virtual_only,
    theta_from_alpha,
)
from propagation.oracle import (
    build_system,
    contraction_operator,
    solve_fp,
    solve_pinned,
    solve_steady_state,
    spectral_radius,
)


def random_problem(n_nodes=30, n_edges=60, n_features=4, known_fraction=0.4, seed=3):
    """Connected random graph (ring plus chords) with a random known set."""
    rng = np.random.default_rng(seed)
    edges = [(i, (i + 1) % n_nodes) for i in range(n_nodes)]
    edges += [tuple(pair) for pair in rng.integers(0, n_nodes, size=(n_edges, 2))]
    graph = build_graph(n_nodes, edges)
    z = rng.random((n_nodes, n_features))
    known = KnownSet(rng.choice(n_nodes, size=int(known_fraction * n_nodes), replace=False), n_nodes)
    return graph, mask_features(z, known), known


class ParameterMappingTests(SimpleTestCase):

    def test_known_values(self):
        eta, theta = map_alpha_beta(0.5, 0.5, 3)
        self.assertAlmostEqual(theta, 2 / 3)
        self.assertAlmostEqual(eta, 2.0)

    def test_forward_inverts_mapping(self):
        for alpha, beta, n in [(0.5, 0.5, 3), (0.9, 0.2, 100), (0.05, 0.95, 17)]:
            eta, theta = map_alpha_beta(alpha, beta, n)
            back = forward_alpha_beta(eta, theta, n)
            assert_allclose(back, (alpha, beta))

    def test_limits_are_degenerate(self):
        with self.assertRaises(DegenerateError):
            map_alpha_beta(1.0, 0.5, 10)
        with self.assertRaises(DegenerateError):
            map_alpha_beta(0.5, 1.0, 10)

    def test_needs_two_nodes(self):
        with self.assertRaises(InputError):
            map_alpha_beta(0.5, 0.5, 1)
        with self.assertRaises(InputError):
            theta_from_alpha(0.5, 1)

    def test_config_validation(self):
        for bad in ({"alpha": 0.0}, {"beta": 1.5}, {"max_iters": 0}, {"tolerance": -1.0}):
            with self.assertRaises(InputError):
                ArbConfig(**bad)
        self.assertTrue(ArbConfig(alpha=1.0).is_degenerate)
        self.assertFalse(ArbConfig().is_degenerate)


class EngineTests(SimpleTestCase):

    def setUp(self):
        self.graph, self.z, self.known = random_problem()

    def test_known_rows_start_at_observed_values(self):
        seen = {}

        def first(iteration, x):
            seen.setdefault(iteration, x.copy())

        run_fp(self.graph, self.z, self.known, max_iters=1, on_step=first)
        assert_array_equal(seen[1][self.known.known], self.z[self.known.known])

    def test_fp_hard_reset_every_step(self):
        result = run_fp(self.graph, self.z, self.known, max_iters=5, tolerance=0.0)
        assert_array_equal(result.features[self.known.known], self.z[self.known.known])
        self.assertEqual(result.iterations_run, 5)
        self.assertEqual(len(result.history), 5)

    def test_arb_at_one_one_is_fp(self):
        fp = run_fp(self.graph, self.z, self.known, max_iters=12, tolerance=0.0)
        arb = run_arb(self.graph, self.z, self.known, ArbConfig(1.0, 1.0, 12, 0.0))
        assert_array_equal(arb.features, fp.features)

    def test_ablations_degenerate_to_the_matching_engine(self):
        config = ArbConfig(0.7, 1.0, 15, 0.0)
        virtual = run_virtual_only(self.graph, self.z, self.known, 0.7, 15, 0.0)
        assert_array_equal(run_arb(self.graph, self.z, self.known, config).features, virtual.features)

        config = ArbConfig(1.0, 0.6, 15, 0.0)
        boundary = run_boundary_only(self.graph, self.z, self.known, 0.6, 15, 0.0)
        assert_array_equal(run_arb(self.graph, self.z, self.known, config).features, boundary.features)

    def test_single_step_by_hand(self):
        graph = build_graph(2, [])
        z = np.array([[1.0], [0.0]])
        known = KnownSet([0], 2)
        result = run_arb(graph, z, known, ArbConfig(0.5, 0.5, 1, 0.0))
        # Both rows get half the start mean (0.25); node 0 then moves halfway back to 1.
        assert_allclose(result.features[:, 0], [0.5 * 0.5 * 0.5 + 0.5, 0.5 * 0.5])

    def test_two_isolated_nodes_steady_state(self):
        graph = build_graph(2, [])
        z = np.array([[1.0], [0.0]])
        known = KnownSet([0], 2)
        result = run_arb(graph, z, known, ArbConfig(0.5, 0.5, 500, 1e-14))
        assert_allclose(result.features[:, 0], [0.6, 0.2], atol=1e-10)

    def test_cold_start_nodes_receive_the_mean(self):
        graph = build_graph(4, [(0, 1), (1, 2)])
        z = np.array([[1.0], [0.0], [0.0], [0.0]])
        known = KnownSet([0], 4)
        fp = run_fp(graph, z, known, max_iters=20)
        arb = run_arb(graph, z, known, ArbConfig(0.5, 0.5, 20))
        self.assertEqual(fp.features[3, 0], 0.0)
        self.assertGreater(arb.features[3, 0], 0.0)

    def test_early_stop(self):
        result = run_arb(self.graph, self.z, self.known, ArbConfig(0.5, 0.5, 1000, 1e-6))
        self.assertTrue(result.converged)
        self.assertLess(result.iterations_run, 1000)
        self.assertLessEqual(result.final_delta, 1e-6)

    def test_tolerance_zero_runs_every_iteration(self):
        result = run_arb(self.graph, self.z, self.known, ArbConfig(0.5, 0.5, 7, 0.0))
        self.assertEqual(result.iterations_run, 7)
        self.assertFalse(result.converged)

    def test_threads_do_not_change_the_result(self):
        single = run_arb(self.graph, self.z, self.known, ArbConfig(0.4, 0.6, 10, 0.0))
        threaded = run_arb(self.graph, self.z, self.known, ArbConfig(0.4, 0.6, 10, 0.0), threads=4)
        assert_array_equal(threaded.features, single.features)

    def test_history_can_be_skipped(self):
        config = ArbConfig(0.4, 0.6, 9, 0.0)
        tracked = run_arb(self.graph, self.z, self.known, config)
        untracked = run_arb(self.graph, self.z, self.known, config, keep_history=False)
        assert_array_equal(untracked.features, tracked.features)
        self.assertEqual(untracked.history, [])
        self.assertEqual(untracked.final_delta, tracked.final_delta)

    def test_rejects_empty_known_set(self):
        with self.assertRaises(InputError):
            run_fp(self.graph, self.z, KnownSet([], self.graph.n_nodes))

    def test_rejects_mismatched_known_set(self):
        with self.assertRaises(InputError):
            run_fp(self.graph, self.z, KnownSet([0], self.graph.n_nodes + 1))

    def test_dispatch(self):
        for engine in ("fp", "arb", "arb-no-ve", "arb-no-bc"):
            self.assertEqual(reconstruct(engine, self.graph, self.z, self.known).engine, engine)
        with self.assertRaises(InputError):
            reconstruct("gcn", self.graph, self.z, self.known)


class OracleAgreementTests(SimpleTestCase):

    def setUp(self):
        self.graph, self.z, self.known = random_problem()

    def test_arb_converges_to_steady_state(self):
        alpha, beta = 0.6, 0.4
        eta, theta = map_alpha_beta(alpha, beta, self.graph.n_nodes)
        expected = solve_steady_state(self.graph, self.z, self.known, eta, theta)
        result = run_arb(self.graph, self.z, self.known, ArbConfig(alpha, beta, 5000, 1e-14))
        assert_allclose(result.features, expected, atol=1e-8)

    def test_steady_state_solves_its_system(self):
        eta, theta = map_alpha_beta(0.5, 0.5, self.graph.n_nodes)
        system = build_system(self.graph, self.z, self.known, eta, theta)
        solution = solve_steady_state(self.graph, self.z, self.known, eta, theta)
        assert_allclose(system.system_matrix @ solution, system.rhs, atol=1e-10)

    def test_two_isolated_nodes_closed_form(self):
        graph = build_graph(2, [])
        z = np.array([[1.0], [0.0]])
        solution = solve_steady_state(graph, z, KnownSet([0], 2), eta=2.0, theta=0.5)
        assert_allclose(solution[:, 0], [0.6, 0.2])

    def test_fp_converges_to_harmonic_extension(self):
        expected = solve_fp(self.graph, self.z, self.known)
        result = run_fp(self.graph, self.z, self.known, max_iters=20000, tolerance=1e-15)
        assert_allclose(result.features, expected, atol=1e-7)

    def test_virtual_only_converges_to_pinned_solution(self):
        alpha = 0.7
        theta = theta_from_alpha(alpha, self.graph.n_nodes)
        expected = solve_pinned(self.graph, self.z, self.known, theta)
        result = run_virtual_only(self.graph, self.z, self.known, alpha, 5000, 1e-15)
        assert_allclose(result.features, expected, atol=1e-8)
        assert_array_equal(expected[self.known.known], self.z[self.known.known])

    def test_boundary_only_converges_to_steady_state_without_virtual_edges(self):
        beta = 0.5
        eta = (1 - beta) / beta
        expected = solve_steady_state(self.graph, self.z, self.known, eta, 0.0)
        result = run_boundary_only(self.graph, self.z, self.known, beta, 20000, 1e-15)
        assert_allclose(result.features, expected, atol=1e-7)

    def test_pinned_is_the_large_penalty_limit(self):
        theta = 0.3
        pinned = solve_pinned(self.graph, self.z, self.known, theta)
        penalized = solve_steady_state(self.graph, self.z, self.known, 1e7, theta)
        assert_allclose(penalized, pinned, atol=1e-5)

    def test_pinned_with_every_node_known_is_z(self):
        everyone = KnownSet(np.arange(self.graph.n_nodes), self.graph.n_nodes)
        assert_array_equal(solve_pinned(self.graph, self.z, everyone, 0.4), self.z)

    def test_complete_graph_with_one_known_node_is_constant(self):
        n = 6
        graph = build_graph(n, [(u, v) for u in range(n) for v in range(u + 1, n)])
        known = KnownSet([2], n)
        z = mask_features(np.full((n, 2), 0.7), known)
        for theta in (0.0, 0.5):
            assert_allclose(solve_pinned(graph, z, known, theta), np.full((n, 2), 0.7))
        assert_allclose(solve_steady_state(graph, z, known, 1e6, 0.5), np.full((n, 2), 0.7))

    def test_error_against_fixed_point_never_grows(self):
        alpha, beta = 0.5, 0.5
        eta, theta = map_alpha_beta(alpha, beta, self.graph.n_nodes)
        fixed_point = solve_steady_state(self.graph, self.z, self.known, eta, theta)
        errors = []
        run_arb(
            self.graph, self.z, self.known, ArbConfig(alpha, beta, 60, 0.0),
            on_step=lambda _, x: errors.append(np.linalg.norm(x - fixed_point)),
        )
        for before, after in zip(errors, errors[1:]):
            self.assertLessEqual(after, before + 1e-12)

    def test_penalty_checks(self):
        with self.assertRaises(InputError):
            build_system(self.graph, self.z, self.known, 0.0, 1.0)
        with self.assertRaises(InputError):
            build_system(self.graph, self.z, self.known, 1.0, -1.0)

    @override_settings(ARB_DENSE_LIMIT=10)
    def test_dense_limit(self):
        with self.assertRaises(CapabilityError):
            solve_steady_state(self.graph, self.z, self.known, 1.0, 1.0)
        with self.assertRaises(CapabilityError):
            solve_fp(self.graph, self.z, self.known)


class SpectralRadiusTests(SimpleTestCase):

    def setUp(self):
        self.graph, _, self.known = random_problem(n_nodes=25, seed=11)

    def dense_operator(self, alpha, beta):
        n = self.graph.n_nodes
        step = alpha * self.graph.norm_adjacency.toarray() + (1 - alpha) * np.full((n, n), 1 / n)
        scale = np.where(self.known.mask, beta, 1.0)
        return scale[:, None] * step

    def test_operator_matches_dense_matrix(self):
        operator = contraction_operator(self.graph, self.known, 0.6, 0.3)
        v = np.random.default_rng(0).standard_normal(self.graph.n_nodes)
        assert_allclose(operator(v), self.dense_operator(0.6, 0.3) @ v)

    def test_radius_below_one_and_matches_eigenvalues(self):
        for alpha, beta in [(0.5, 0.5), (0.8, 0.3), (0.3, 0.9)]:
            operator = contraction_operator(self.graph, self.known, alpha, beta)
            estimate = spectral_radius(operator, self.graph.n_nodes)
            exact = np.max(np.abs(np.linalg.eigvals(self.dense_operator(alpha, beta))))
            self.assertTrue(estimate.converged)
            self.assertLess(estimate.radius, 1.0)
            self.assertAlmostEqual(estimate.radius, exact, places=5)

    def test_scaled_identity(self):
        for scale in (1.0, 0.5):
            estimate = spectral_radius(lambda v: scale * v, 10)
            self.assertAlmostEqual(estimate.radius, scale, places=12)
            self.assertTrue(estimate.converged)

    def test_zero_operator(self):
        estimate = spectral_radius(lambda v: np.zeros_like(v), 5)
        self.assertEqual(estimate.radius, 0.0)
        self.assertTrue(estimate.converged)

    def test_reports_non_convergence(self):
        rotation = np.array([[0.0, -1.0], [1.0, 0.0]]) * np.array([1.0, 0.5])
        with self.assertLogs("propagation.oracle", level="WARNING"):
            estimate = spectral_radius(lambda v: rotation @ v, 2, max_iters=50)
        self.assertFalse(estimate.converged)




def random_instances(count, seed):
    """Seeded grid of small problems with step weights drawn from a fixed lattice."""
    rng = np.random.default_rng(seed)
    for index in range(count):
        n_nodes = int(rng.integers(20, 201))
        problem = random_problem(
            n_nodes=n_nodes,
            n_edges=2 * n_nodes,
            n_features=int(rng.integers(1, 9)),
            known_fraction=float(rng.choice([0.1, 0.4, 0.9])),
            seed=seed * 1000 + index,
        )
        alpha, beta = (float(value) for value in rng.choice([0.3, 0.5, 0.9], size=2))
        yield problem, alpha, beta


class RandomInstanceTests(SimpleTestCase):

    def test_iteration_matches_the_dense_fixed_point(self):
        for (graph, z, known), alpha, beta in random_instances(50, seed=17):
            with self.subTest(n_nodes=graph.n_nodes, known=len(known), alpha=alpha, beta=beta):
                eta, theta = map_alpha_beta(alpha, beta, graph.n_nodes)
                fixed_point = solve_steady_state(graph, z, known, eta, theta)
                errors = []
                result = run_arb(
                    graph, z, known, ArbConfig(alpha, beta, 20000, 1e-12),
                    on_step=lambda _, x: errors.append(np.linalg.norm(x - fixed_point)),
                )
                self.assertTrue(result.converged)
                self.assertLessEqual(np.max(np.abs(result.features - fixed_point)), 1e-6)
                for before, after in zip(errors[4:], errors[5:]):
                    self.assertLessEqual(after, before + 1e-12)

                operator = contraction_operator(graph, known, alpha, beta)
                self.assertLess(spectral_radius(operator, graph.n_nodes).radius, 1.0)

    def test_arb_at_one_one_matches_fp_at_every_step(self):
        for (graph, z, known), _, _ in random_instances(20, seed=29):
            fp_steps, arb_steps = [], []
            run_fp(graph, z, known, max_iters=30, tolerance=0.0, on_step=lambda _, x: fp_steps.append(x))
            run_arb(graph, z, known, ArbConfig(1.0, 1.0, 30, 0.0), on_step=lambda _, x: arb_steps.append(x))
            self.assertEqual(len(arb_steps), 30)
            for fp_x, arb_x in zip(fp_steps, arb_steps):
                assert_allclose(arb_x, fp_x, rtol=0, atol=1e-12)

    def test_system_matrix_is_positive_definite(self):
        for (graph, z, known), alpha, beta in random_instances(10, seed=31):
            eta, theta = map_alpha_beta(alpha, beta, graph.n_nodes)
            for theta_value in (0.0, theta):
                matrix = build_system(graph, z, known, eta, theta_value).system_matrix
                self.assertGreater(np.linalg.eigvalsh(matrix).min(), 0.0)


def regular_graph(n_nodes, n_isolated=0, hops=(1, 3)):
    """Circulant graph (uniform degree) followed by ``n_isolated`` isolated nodes."""
    edges = [(i, (i + hop) % n_nodes) for hop in hops for i in range(n_nodes)]
    return build_graph(n_nodes + n_isolated, edges)


class IterateBoundTests(SimpleTestCase):

    def test_iterates_stay_within_the_observed_range(self):
        # Uniform degrees keep every row sum of Ã at most 1.
        graph = regular_graph(60, n_isolated=5)
        rng = np.random.default_rng(8)
        known = KnownSet(rng.choice(graph.n_nodes, size=20, replace=False), graph.n_nodes)
        z = mask_features(rng.random((graph.n_nodes, 3)), known)
        low, high = min(0.0, z[known.known].min()), z[known.known].max()

        for engine, config in [("fp", ArbConfig()), ("arb", ArbConfig(0.4, 0.3, 80, 0.0)),
                               ("arb-no-ve", ArbConfig(1.0, 0.2, 80, 0.0)), ("arb-no-bc", ArbConfig(0.6, 1.0, 80, 0.0))]:
            def check(_, x):
                self.assertGreaterEqual(x.min(), low - 1e-12)
                self.assertLessEqual(x.max(), high + 1e-12)

            reconstruct(engine, graph, z, known, config, on_step=check)

    def test_repeated_runs_are_bit_identical(self):
        graph, z, known = random_problem(n_nodes=80, n_features=5, seed=12)
        config = ArbConfig(0.35, 0.65, 200, 1e-9)
        first = run_arb(graph, z, known, config)
        second = run_arb(graph, z, known, config)
        assert_array_equal(first.features, second.features)
        self.assertEqual(
            (first.iterations_run, first.final_delta, first.converged, first.history),
            (second.iterations_run, second.final_delta, second.converged, second.history),
        )


class ColdStartTests(SimpleTestCase):

    def test_isolated_unknown_nodes_are_reached_only_by_arb(self):
        for seed in range(3):
            graph, _ = generate_longtail_graph(2000, mean_degree=4.0, isolated_fraction=0.1, seed=seed)
            rng = np.random.default_rng(seed)
            known, _, _ = make_split(graph.n_nodes, SplitSpec(seed=seed))
            z = mask_features(rng.random((graph.n_nodes, 8)) + 0.1, known)
            isolated_unknown = np.intersect1d(graph.isolated_nodes(), known.unknown)
            self.assertGreater(isolated_unknown.size, 0)

            fp = run_fp(graph, z, known, max_iters=100)
            arb = run_arb(graph, z, known, ArbConfig(0.9, 0.5, 2000, 1e-10))
            assert_array_equal(fp.features[isolated_unknown], 0.0)
            self.assertTrue(arb.converged)
            self.assertTrue(np.all(arb.features[isolated_unknown] > 0))


@tag("slow")
class ThroughputTests(SimpleTestCase):

    def test_arb_costs_at_most_ten_percent_more_than_fp(self):
        graph, _ = generate_longtail_graph(100_000, mean_degree=20.0, isolated_fraction=0.0, seed=1)
        rng = np.random.default_rng(1)
        known, _, _ = make_split(graph.n_nodes, SplitSpec(seed=1))
        z = mask_features(rng.random((graph.n_nodes, 128)), known)
        config = ArbConfig(0.5, 0.5, 20, 0.0)

        timings = {"fp": [], "arb": []}
        for _ in range(3):
            for engine, runs in timings.items():
                started = time.perf_counter()
                reconstruct(engine, graph, z, known, config, keep_history=False)
                runs.append(time.perf_counter() - started)

        self.assertLessEqual(min(timings["arb"]) / min(timings["fp"]), 1.10)
