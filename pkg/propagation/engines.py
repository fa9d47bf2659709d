"""Iterative attribute reconstruction engines.

All four engines share one loop. Each step propagates every row,
optionally mixes in the global mean of the current iterate, and then
resets the known rows (hard reset when beta is 1, moving reset otherwise).

=========  =====  =====
engine     alpha  beta
=========  =====  =====
fp         1      1
arb        a      b
arb-no-ve  1      b
arb-no-bc  a      1
=========  =====  =====
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import DegenerateError, InputError, NumericalError
from graphs.graph import as_feature_matrix
from graphs.operations import blocked_product, column_means, row_blocks, use_threads

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 40
DEFAULT_TOLERANCE = 1e-7

ENGINES = ("fp", "arb", "arb-no-ve", "arb-no-bc")


@dataclass(frozen=True)
class ArbConfig:
    """Hyperparameters of one reconstruction run.

    A value of exactly 1 for ``alpha`` switches the mean term off; exactly 1
    for ``beta`` turns the moving reset into FP's hard reset.
    ``tolerance`` is the relative Frobenius change that stops the loop early;
    0 runs all ``max_iters`` steps.
    """

    alpha: float = 0.5
    beta: float = 0.5
    max_iters: int = DEFAULT_MAX_ITERS
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        _check_unit("alpha", self.alpha)
        _check_unit("beta", self.beta)
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InputError(f"max_iters must be a positive integer, got {self.max_iters}")
        if not math.isfinite(self.tolerance) or self.tolerance < 0:
            raise InputError(f"tolerance must be a non-negative number, got {self.tolerance}")

    @property
    def is_degenerate(self):
        return self.alpha == 1 or self.beta == 1

    def penalties(self, n_nodes):
        """The (eta, theta) weights of the equivalent quadratic objective."""
        return map_alpha_beta(self.alpha, self.beta, n_nodes)


@dataclass
class ReconstructionResult:
    features: np.ndarray
    iterations_run: int
    final_delta: float
    converged: bool
    engine: str = "arb"
    history: list = field(default_factory=list)


def _check_unit(name, value):
    if not (isinstance(value, (int, float, np.floating)) and 0 < value <= 1):
        raise InputError(f"{name} must lie in (0, 1], got {value!r}")


def theta_from_alpha(alpha, n_nodes):
    """Virtual-edge weight theta for a mean-mixing weight ``alpha``."""
    if n_nodes < 2:
        raise InputError("virtual edges need at least two nodes")
    return (n_nodes - 1) * (1 - alpha) / (alpha * n_nodes)


def map_alpha_beta(alpha, beta, n_nodes):
    """Translate step weights (alpha, beta) into objective weights (eta, theta).

    theta weighs the virtual-edge smoothness term and eta the penalty that
    ties known rows to their observed values. Both are finite only on the
    open interval; alpha or beta equal to 1 raises :class:`DegenerateError`
    and callers must use the pinned oracle instead.
    """
    if not (0 < alpha <= 1 and 0 < beta <= 1):
        raise InputError(f"alpha and beta must lie in (0, 1], got ({alpha}, {beta})")
    if n_nodes < 2:
        raise InputError("the mapping needs at least two nodes")
    if alpha == 1 or beta == 1:
        raise DegenerateError(
            f"(alpha, beta) = ({alpha}, {beta}) has no finite (eta, theta); "
            "use the row-pinned oracle"
        )
    theta = theta_from_alpha(alpha, n_nodes)
    eta = (1 - beta) / (alpha * beta)
    return eta, theta


def forward_alpha_beta(eta, theta, n_nodes):
    """Inverse of :func:`map_alpha_beta`."""
    if eta <= 0 or theta < 0 or n_nodes < 2:
        raise InputError("eta must be positive, theta non-negative and N at least 2")
    alpha = (n_nodes - 1) / (theta * n_nodes + n_nodes - 1)
    beta = (1 / alpha) / (1 / alpha + eta)
    return alpha, beta


def _step_operator(graph, order, n_known, alpha, beta):
    """Ã with nodes taken in ``order``, rows pre-scaled by the step weights.

    Known nodes come first in ``order``; their rows carry alpha * beta and
    the rest carry alpha, so one sparse product covers both scalings.
    """
    matrix = graph.norm_adjacency[order][:, order].tocsr()
    matrix.sort_indices()
    scale = np.full(graph.n_nodes, float(alpha))
    if beta < 1:
        scale[:n_known] *= beta
    if np.any(scale != 1.0):
        matrix.data *= np.repeat(scale, np.diff(matrix.indptr))
    return matrix


def _iterate(engine, graph, z, known, alpha, beta, max_iters, tolerance, threads=1, on_step=None,
             keep_history=True):
    z = as_feature_matrix(z, graph.n_nodes, name="z")
    if known.n_nodes != graph.n_nodes:
        raise InputError(f"known set covers {known.n_nodes} nodes, graph has {graph.n_nodes}")
    if len(known) == 0:
        raise InputError("the known set is empty, there is nothing to propagate")
    ArbConfig(alpha, beta, max_iters, tolerance)

    # Work with the known rows first so every reset is a slice of x.
    n_known = len(known)
    order = np.concatenate([known.known, known.unknown])
    restore = np.argsort(order, kind="stable")
    operator = _step_operator(graph, order, n_known, alpha, beta)
    blocks = row_blocks(operator, int(threads)) if use_threads(graph.n_nodes, threads) else None

    z_k = z[known.known]
    anchor = (1 - beta) * z_k if beta < 1 else None
    x = np.zeros_like(z)
    x[:n_known] = z_k

    logger.debug(
        "%s: alpha=%s beta=%s max_iters=%d tolerance=%g on %r",
        engine, alpha, beta, max_iters, tolerance, graph,
    )
    history = []
    delta = math.inf
    converged = False
    iteration = 0
    for iteration in range(1, max_iters + 1):
        x_next = blocked_product(operator, x, blocks)
        if alpha < 1:
            shift = (1 - alpha) * column_means(x)
            x_next[n_known:] += shift
            if beta < 1:
                x_next[:n_known] += beta * shift
        if beta < 1:
            x_next[:n_known] += anchor
        else:
            x_next[:n_known] = z_k

        if tolerance > 0 or keep_history or iteration == max_iters:
            delta = float(np.linalg.norm(x_next - x) / max(np.linalg.norm(x), 1.0))
        x = x_next
        if keep_history:
            history.append(delta)
        if on_step is not None:
            on_step(iteration, x[restore])
        if tolerance > 0 and delta <= tolerance:
            converged = True
            break

    if not np.all(np.isfinite(x)):
        raise NumericalError(f"{engine} produced non-finite values after {iteration} iterations")
    if not converged:
        logger.info("%s stopped after %d iterations, last change %.3g", engine, iteration, delta)
    return ReconstructionResult(
        features=x[restore],
        iterations_run=iteration,
        final_delta=delta,
        converged=converged,
        engine=engine,
        history=history,
    )


def run_fp(graph, z, known, max_iters=DEFAULT_MAX_ITERS, tolerance=DEFAULT_TOLERANCE, threads=1, on_step=None,
           keep_history=True):
    """Feature propagation: X <- ÃX, then hard reset X_k <- Z_k."""
    return _iterate("fp", graph, z, known, 1.0, 1.0, max_iters, tolerance, threads, on_step, keep_history)


def run_arb(graph, z, known, config=None, threads=1, on_step=None, keep_history=True):
    """Global propagation with the mean term, followed by the moving reset."""
    config = config or ArbConfig()
    return _iterate(
        "arb", graph, z, known, config.alpha, config.beta,
        config.max_iters, config.tolerance, threads, on_step, keep_history,
    )


def run_boundary_only(graph, z, known, beta, max_iters=DEFAULT_MAX_ITERS, tolerance=DEFAULT_TOLERANCE,
                      threads=1, on_step=None, keep_history=True):
    """Moving reset without virtual edges."""
    return _iterate("arb-no-ve", graph, z, known, 1.0, beta, max_iters, tolerance, threads, on_step, keep_history)


def run_virtual_only(graph, z, known, alpha, max_iters=DEFAULT_MAX_ITERS, tolerance=DEFAULT_TOLERANCE,
                     threads=1, on_step=None, keep_history=True):
    """Virtual edges with FP's hard reset."""
    return _iterate("arb-no-bc", graph, z, known, alpha, 1.0, max_iters, tolerance, threads, on_step, keep_history)


def reconstruct(engine, graph, z, known, config=None, threads=1, on_step=None, keep_history=True):
    """Run the engine registered under ``engine`` with ``config``.

    Engines that do not use alpha or beta ignore them. ``keep_history=False``
    also skips the per-step change norm when ``config.tolerance`` is 0.
    """
    config = config or ArbConfig()
    common = {"threads": threads, "on_step": on_step, "keep_history": keep_history}
    if engine == "fp":
        return run_fp(graph, z, known, config.max_iters, config.tolerance, **common)
    if engine == "arb":
        return run_arb(graph, z, known, config, **common)
    if engine == "arb-no-ve":
        return run_boundary_only(graph, z, known, config.beta, config.max_iters, config.tolerance, **common)
    if engine == "arb-no-bc":
        return run_virtual_only(graph, z, known, config.alpha, config.max_iters, config.tolerance, **common)
    raise InputError(f"unknown engine {engine!r}, expected one of {', '.join(ENGINES)}")
