"""Experiment protocol: splits, masking, hyperparameter search, sweeps and
the downstream classification proxy."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import accuracy_score
from sklearn.model_selection import StratifiedKFold

from core.exceptions import ArbError, DegenerateError, InputError
from evaluation.metrics import BINARY, CONTINUOUS, corr, evaluate_reconstruction, ndcg_at_k
from graphs.graph import KnownSet, as_feature_matrix
from propagation.engines import ArbConfig, reconstruct

logger = logging.getLogger(__name__)

NEIGHBOR_DIRECTIONS = (
    (1, 0), (-1, 0), (0, 1), (0, -1),
    (1, 1), (1, -1), (-1, 1), (-1, -1),
)


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    known_fraction: float = 0.4
    val_test_ratio: tuple = (1, 5)

    def __post_init__(self):
        if not 0 < self.known_fraction < 1:
            raise InputError(f"known_fraction must lie in (0, 1), got {self.known_fraction}")
        if len(self.val_test_ratio) != 2 or min(self.val_test_ratio) <= 0:
            raise InputError(f"val_test_ratio must be two positive numbers, got {self.val_test_ratio}")


@dataclass
class SearchState:
    center: tuple
    step: float
    best_score: float = -math.inf
    best: tuple = None
    evaluations: list = field(default_factory=list)


@dataclass
class SweepRow:
    rate: float
    engine: str
    report: object = None
    error: str = None
    iterations_run: int = 0
    alpha: float = None
    beta: float = None


def _round_half_up(value):
    return int(math.floor(value + 0.5))


def make_split(n_nodes, split_spec):
    """Known / validation / test partition of ``range(n_nodes)``.

    The known set takes ``known_fraction`` of the nodes (at least one); the
    remaining target nodes are divided between validation and test in
    ``val_test_ratio``.
    """
    if n_nodes < 10:
        raise InputError(f"splits need at least 10 nodes, got {n_nodes}")
    n_known = max(1, _round_half_up(split_spec.known_fraction * n_nodes))
    val_share, test_share = split_spec.val_test_ratio
    n_targets = n_nodes - n_known
    n_val = _round_half_up(n_targets * val_share / (val_share + test_share))
    if n_known >= n_nodes or n_val == 0 or n_val >= n_targets:
        raise InputError(
            f"split of {n_nodes} nodes leaves an empty cell "
            f"(known={n_known}, val={n_val}, test={n_targets - n_val})"
        )

    order = np.random.default_rng(split_spec.seed).permutation(n_nodes)
    known = KnownSet(order[:n_known], n_nodes)
    val = np.sort(order[n_known:n_known + n_val])
    test = np.sort(order[n_known + n_val:])
    return known, val, test


def mask_features(z, known):
    """Copy of ``z`` with every unknown row zeroed."""
    z = np.asarray(z, dtype=np.float64)
    masked = np.zeros_like(z)
    masked[known.known] = z[known.known]
    return masked


def _clamp(value, floor):
    return min(1.0, max(floor, value))


def search_hyperparams(objective, initial_step=0.25, min_step=1 / 64, max_evals=200, start=(0.5, 0.5)):
    """Compass search for the (alpha, beta) that maximizes ``objective``.

    Each round scores the eight axis and diagonal neighbors at distance
    ``step`` around the center, moves to the best strictly improving one,
    and halves ``step`` when none improves. Candidates are clamped into
    [min_step, 1]. Search ends when ``step`` drops below ``min_step`` or
    ``max_evals`` objective calls have been made.
    """
    if initial_step <= 0 or min_step <= 0 or max_evals < 1:
        raise InputError("steps must be positive and max_evals at least 1")

    state = SearchState(center=(float(start[0]), float(start[1])), step=float(initial_step))
    scores = {}

    def score(point):
        if point in scores:
            return scores[point]
        if len(state.evaluations) >= max_evals:
            return None
        value = objective(*point)
        value = float(value) if value is not None else math.nan
        if not math.isfinite(value):
            logger.warning("objective returned %r at alpha=%.4f beta=%.4f", value, *point)
            value = -math.inf
        scores[point] = value
        state.evaluations.append((point, value))
        if value > state.best_score or state.best is None:
            state.best_score, state.best = value, point
        return value

    center_score = score(state.center)
    while state.step >= min_step and len(state.evaluations) < max_evals:
        candidate, candidate_score = None, center_score
        for dx, dy in NEIGHBOR_DIRECTIONS:
            point = (
                _clamp(state.center[0] + dx * state.step, min_step),
                _clamp(state.center[1] + dy * state.step, min_step),
            )
            if point == state.center:
                continue
            value = score(point)
            if value is None:
                break
            if value > candidate_score:
                candidate, candidate_score = point, value

        if candidate is not None:
            logger.debug("search moves to %s (%.6f) at step %g", candidate, candidate_score, state.step)
            state.center, center_score = candidate, candidate_score
        else:
            state.step /= 2

    logger.info(
        "search finished after %d evaluations: best %s scores %.6f",
        len(state.evaluations), state.best, state.best_score,
    )
    return state.best, state


def _softmax(logits):
    logits = logits - logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def _fit_softmax(x, y, n_classes, epochs, learning_rate, l2):
    n_samples = x.shape[0]
    targets = np.eye(n_classes)[y]
    weights = np.zeros((x.shape[1], n_classes))
    bias = np.zeros(n_classes)
    for _ in range(epochs):
        grad = _softmax(x @ weights + bias) - targets
        weights -= learning_rate * (x.T @ grad / n_samples + l2 * weights)
        bias -= learning_rate * grad.mean(axis=0)
    return weights, bias


def train_linear_classifier(features, labels, folds=5, seed=0, epochs=300, learning_rate=0.5, l2=1e-4):
    """Mean stratified k-fold test accuracy of multinomial logistic regression.

    The model is trained by full-batch gradient descent on features
    standardized with the training fold's statistics.
    """
    x = as_feature_matrix(features, name="features")
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise InputError(f"{y.shape[0]} labels for {x.shape[0]} feature rows")
    if y.size and (y.min() < 0 or not np.issubdtype(y.dtype, np.integer)):
        raise InputError("labels must be non-negative class ids")
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateError("classification needs at least two classes")
    n_classes = int(y.max()) + 1

    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    try:
        fold_indices = list(splitter.split(x, y))
    except ValueError as exc:
        raise InputError(f"cannot make {splitter.n_splits} stratified folds: {exc}") from exc

    scores = []
    for train, test in fold_indices:
        mean = x[train].mean(axis=0)
        scale = x[train].std(axis=0)
        scale[scale == 0] = 1.0
        weights, bias = _fit_softmax((x[train] - mean) / scale, y[train], n_classes, epochs, learning_rate, l2)
        predicted = np.argmax(((x[test] - mean) / scale) @ weights + bias, axis=1)
        scores.append(accuracy_score(y[test], predicted))
    return float(np.mean(scores))


def evaluate_classification(features, labels, nodes, folds=5, seed=0):
    """Classifier accuracy using only the reconstructed rows of ``nodes``."""
    nodes = np.asarray(nodes, dtype=np.int64)
    return train_linear_classifier(np.asarray(features)[nodes], np.asarray(labels)[nodes], folds, seed)


def make_objective(graph, z, known, eval_nodes, kind=BINARY, engine="arb", max_iters=40, tolerance=1e-7,
                   threads=1):
    """Validation score of ``engine`` as a function of (alpha, beta).

    Binary data is scored by nDCG@10 (or nDCG@F when F < 10), continuous data
    by CORR.
    """
    z = as_feature_matrix(z, graph.n_nodes, name="z")
    masked = mask_features(z, known)
    truth = z[eval_nodes]
    k = min(10, z.shape[1])

    def objective(alpha, beta):
        config = ArbConfig(alpha, beta, max_iters, tolerance)
        result = reconstruct(engine, graph, masked, known, config, threads)
        predicted = result.features[eval_nodes]
        if kind == CONTINUOUS:
            return corr(predicted, truth)
        return ndcg_at_k(predicted, truth, k)

    return objective


def _cell_seed(seed, *parts):
    """Deterministic child seed for one sweep cell."""
    words = [int(seed)]
    for part in parts:
        if isinstance(part, str):
            words.extend(part.encode())
        else:
            words.append(int(round(part * 10_000)))
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def _effective_weights(engine, config):
    if engine == "fp":
        return 1.0, 1.0
    if engine == "arb-no-ve":
        return 1.0, config.beta
    if engine == "arb-no-bc":
        return config.alpha, 1.0
    return config.alpha, config.beta


def run_missing_rate_sweep(graph, z, labels=None, rates=(0.4, 0.9), engines=("fp", "arb"), seed=0,
                           configs=None, kind=BINARY, k_list=(10, 20, 50), all_unknown=False, threads=1,
                           search=None):
    """Score every engine at every missing rate.

    All engines at one rate share the same split. With ``search`` (a dict of
    :func:`search_hyperparams` options, possibly empty) every engine except
    fp first has its (alpha, beta) searched on that split's validation
    nodes. A failing cell records its error and the sweep moves on.
    """
    z = as_feature_matrix(z, graph.n_nodes, name="z")
    configs = configs or {}
    rows = []
    for rate in rates:
        try:
            split_spec = SplitSpec(seed=_cell_seed(seed, float(rate)), known_fraction=1.0 - rate)
            known, val, test = make_split(graph.n_nodes, split_spec)
        except ArbError as exc:
            rows.extend(SweepRow(rate, engine, error=str(exc)) for engine in engines)
            continue
        eval_nodes = known.unknown if all_unknown else test
        masked = mask_features(z, known)

        for engine in engines:
            try:
                config = configs.get(engine) or ArbConfig()
                if search is not None and engine != "fp":
                    objective = make_objective(
                        graph, z, known, val, kind, engine, config.max_iters, config.tolerance, threads,
                    )
                    (alpha, beta), _ = search_hyperparams(objective, **search)
                    config = ArbConfig(alpha, beta, config.max_iters, config.tolerance)
                    logger.info("rate=%s engine=%s searched alpha=%.4f beta=%.4f", rate, engine, alpha, beta)
                result = reconstruct(engine, graph, masked, known, config, threads)
                report = evaluate_reconstruction(result.features, z, eval_nodes, kind, k_list)
                if labels is not None:
                    report.accuracy = evaluate_classification(
                        result.features, labels, known.unknown, seed=_cell_seed(seed, float(rate), engine),
                    )
                alpha, beta = _effective_weights(engine, config)
                rows.append(SweepRow(
                    rate, engine, report=report, iterations_run=result.iterations_run, alpha=alpha, beta=beta,
                ))
            except (ArbError, ValueError) as exc:
                logger.warning("sweep cell rate=%s engine=%s failed: %s", rate, engine, exc)
                rows.append(SweepRow(rate, engine, error=str(exc)))
    return rows


def run_sensitivity_grid(graph, z, known, eval_nodes, alphas, betas, config=None, kind=BINARY, k_list=(10,),
                         threads=1):
    """ARB quality on every (alpha, beta) pair of a fixed lattice.

    Returns ``(alpha, beta, report, iterations_run)`` rows, alpha-major.
    """
    z = as_feature_matrix(z, graph.n_nodes, name="z")
    config = config or ArbConfig()
    masked = mask_features(z, known)
    rows = []
    for alpha in alphas:
        for beta in betas:
            cell = ArbConfig(alpha, beta, config.max_iters, config.tolerance)
            result = reconstruct("arb", graph, masked, known, cell, threads)
            report = evaluate_reconstruction(result.features, z, eval_nodes, kind, k_list)
            rows.append((alpha, beta, report, result.iterations_run))
    return rows


def run_depth_sweep(graph, z, known, eval_nodes, depths=range(1, 11), engines=("fp", "arb"), config=None,
                    kind=BINARY, k_list=(10,)):
    """Reconstruction quality after each propagation depth in ``depths``."""
    z = as_feature_matrix(z, graph.n_nodes, name="z")
    config = config or ArbConfig()
    depths = sorted(set(int(d) for d in depths))
    if not depths or depths[0] < 1:
        raise InputError("depths must be positive integers")
    masked = mask_features(z, known)
    deepest = ArbConfig(config.alpha, config.beta, depths[-1], 0.0)

    rows = []
    for engine in engines:
        snapshots = {}

        def keep(iteration, x):
            if iteration in depths:
                snapshots[iteration] = x.copy()

        reconstruct(engine, graph, masked, known, deepest, on_step=keep)
        for depth in depths:
            report = evaluate_reconstruction(snapshots[depth], z, eval_nodes, kind, k_list)
            rows.append((depth, engine, report))
    return rows
