"""Dense reference solvers for checking the iterative engines.

These build N x N matrices and are meant for small graphs only; the
engines in :mod:`propagation.engines` are the production path.
"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from django.conf import settings

from core.exceptions import CapabilityError, InputError, NumericalError
from graphs.graph import as_feature_matrix
from graphs.operations import propagate

logger = logging.getLogger(__name__)

RESIDUAL_LIMIT = 1e-8
POWER_ITERATION_CAP = 10_000
POWER_ITERATION_SEED = 20240917


@dataclass
class OracleSystem:
    """(L + eta I_k + theta L1) X = eta Z~, with Z~ zero on unknown rows."""

    system_matrix: np.ndarray
    rhs: np.ndarray


@dataclass
class SpectralEstimate:
    radius: float
    iterations: int
    converged: bool


def _dense_limit(limit):
    return settings.ARB_DENSE_LIMIT if limit is None else limit


def _check_size(n_nodes, limit):
    limit = _dense_limit(limit)
    if n_nodes > limit:
        raise CapabilityError(f"{n_nodes} nodes exceed the dense solver limit of {limit}")


def laplacian(graph):
    """Dense normalized Laplacian I - Ã."""
    return np.eye(graph.n_nodes) - graph.norm_adjacency.toarray()


def virtual_laplacian(n_nodes):
    """Normalized Laplacian of the complete graph on ``n_nodes`` nodes."""
    if n_nodes < 2:
        return np.zeros((n_nodes, n_nodes))
    return (n_nodes / (n_nodes - 1)) * np.eye(n_nodes) - np.full((n_nodes, n_nodes), 1 / (n_nodes - 1))


def _solve_spd(matrix, rhs, what):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            return scipy.linalg.solve(matrix, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
        raise NumericalError(f"{what} is singular or not positive definite: {exc}") from exc


def _report_residual(matrix, solution, rhs):
    residual = float(np.max(np.abs(matrix @ solution - rhs))) if rhs.size else 0.0
    if residual > RESIDUAL_LIMIT:
        logger.warning("dense solve residual %.3g exceeds %.0e", residual, RESIDUAL_LIMIT)
    return residual


def build_system(graph, z, known, eta, theta):
    if eta <= 0:
        raise InputError(f"eta must be positive, got {eta}")
    if theta < 0:
        raise InputError(f"theta must be non-negative, got {theta}")
    if theta > 0 and graph.n_nodes < 2:
        raise InputError("virtual edges need at least two nodes")
    z = as_feature_matrix(z, graph.n_nodes, name="z")

    matrix = laplacian(graph) + theta * virtual_laplacian(graph.n_nodes)
    matrix[known.known, known.known] += eta
    rhs = np.zeros_like(z)
    rhs[known.known] = eta * z[known.known]
    return OracleSystem(system_matrix=matrix, rhs=rhs)


def solve_steady_state(graph, z, known, eta, theta, dense_limit=None):
    """Fixed point of the moving-reset iteration, by direct factorization."""
    _check_size(graph.n_nodes, dense_limit)
    system = build_system(graph, z, known, eta, theta)
    solution = _solve_spd(system.system_matrix, system.rhs, "the steady-state system")
    _report_residual(system.system_matrix, solution, system.rhs)
    return solution


def solve_pinned(graph, z, known, theta, dense_limit=None):
    """Fixed point with known rows pinned to ``z``.

    This is the limit of :func:`solve_steady_state` as eta grows without
    bound, computed by eliminating the known rows rather than by a large
    penalty.
    """
    _check_size(graph.n_nodes, dense_limit)
    if theta < 0:
        raise InputError(f"theta must be non-negative, got {theta}")
    z = as_feature_matrix(z, graph.n_nodes, name="z")

    solution = np.zeros_like(z)
    solution[known.known] = z[known.known]
    unknown = known.unknown
    if unknown.size == 0:
        return solution

    matrix = laplacian(graph) + theta * virtual_laplacian(graph.n_nodes)
    block = matrix[np.ix_(unknown, unknown)]
    rhs = -matrix[np.ix_(unknown, known.known)] @ z[known.known]
    solution[unknown] = _solve_spd(block, rhs, "the unknown block")
    _report_residual(block, solution[unknown], rhs)
    return solution


def solve_fp(graph, z, known, dense_limit=None):
    """Harmonic extension of the known rows (the FP limit)."""
    return solve_pinned(graph, z, known, 0.0, dense_limit)


def contraction_operator(graph, known, alpha, beta):
    """Homogeneous part of one step: v -> S (alpha Ã v + (1 - alpha) mean(v)).

    S scales known rows by ``beta``. At ``alpha`` = ``beta`` = 1 this is the
    FP map with the known rows kept (not zeroed); pass ``beta`` = 0 for the
    map on the unknown rows alone under a hard reset.
    """
    mask = known.mask

    def apply(v):
        v = np.asarray(v, dtype=np.float64)
        flat = v.ndim == 1
        block = v.reshape(graph.n_nodes, -1)
        out = alpha * propagate(graph, block)
        if alpha < 1:
            out += (1 - alpha) * block.mean(axis=0)
        out[mask] *= beta
        return out.ravel() if flat else out

    return apply


def spectral_radius(operator, n, max_iters=POWER_ITERATION_CAP, tolerance=1e-12, dense_limit=None):
    """Power-iteration estimate of the spectral radius of a linear map.

    The estimate is the growth ratio ||K v|| / ||v|| of the normalized
    iterate; iteration stops once two successive ratios agree within
    ``tolerance``. The start vector is drawn from a fixed seed.
    """
    _check_size(n, dense_limit)
    rng = np.random.default_rng(POWER_ITERATION_SEED)
    v = np.abs(rng.standard_normal(n)) + 0.1
    v /= np.linalg.norm(v)

    previous = None
    radius = 0.0
    for iteration in range(1, max_iters + 1):
        w = np.asarray(operator(v), dtype=np.float64).ravel()
        radius = float(np.linalg.norm(w))
        if radius == 0.0:
            return SpectralEstimate(0.0, iteration, True)
        v = w / radius
        if previous is not None and abs(radius - previous) <= tolerance * max(radius, 1.0):
            return SpectralEstimate(radius, iteration, True)
        previous = radius

    logger.warning("power iteration did not settle after %d steps, estimate %.9f", max_iters, radius)
    return SpectralEstimate(radius, max_iters, False)
