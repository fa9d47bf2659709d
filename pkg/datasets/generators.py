"""Synthetic long-tail graphs and homophilous node attributes."""
import logging

import numpy as np
from scipy.sparse.csgraph import dijkstra

from core.exceptions import InputError
from evaluation.metrics import BINARY, CONTINUOUS
from graphs.graph import build_graph
from graphs.operations import degree_histogram, propagate

logger = logging.getLogger(__name__)

MAX_RETRIES = 10


def _sample_power_law_degrees(n, gamma, k_min, k_max, rng):
    """Sample n degrees from a discrete power law on [k_min, k_max]."""
    k_values = np.arange(k_min, k_max + 1)
    probs = k_values.astype(float) ** (-gamma)
    probs /= probs.sum()
    return rng.choice(k_values, size=n, p=probs)


def _pair_stubs(nodes, degrees, rng):
    stubs = np.repeat(nodes, degrees)
    rng.shuffle(stubs)
    pairs = stubs[: stubs.size - stubs.size % 2].reshape(-1, 2)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    return np.unique(np.sort(pairs, axis=1), axis=0) if pairs.size else pairs.reshape(0, 2)


def generate_longtail_graph(n_nodes, mean_degree=4.0, powerlaw_exponent=2.5, isolated_fraction=0.1, seed=0,
                            max_retries=MAX_RETRIES):
    """Configuration-model graph with a truncated power-law degree sequence.

    ``round(isolated_fraction * n_nodes)`` nodes get no stubs at all. The
    minimum degree of the remaining nodes is picked so that the power law's
    mean is close to ``mean_degree``; self-loops and parallel edges from the
    stub pairing are dropped, so realized degrees can fall short.
    Returns ``(graph, (degree values, counts))``.
    """
    if n_nodes < 10:
        raise InputError(f"need at least 10 nodes, got {n_nodes}")
    if not 0 <= isolated_fraction <= 0.5:
        raise InputError(f"isolated_fraction must lie in [0, 0.5], got {isolated_fraction}")
    if mean_degree <= 0 or powerlaw_exponent <= 1:
        raise InputError("mean_degree must be positive and powerlaw_exponent above 1")

    rng = np.random.default_rng(seed)
    n_isolated = int(np.floor(isolated_fraction * n_nodes + 0.5))
    isolated = rng.choice(n_nodes, size=n_isolated, replace=False)
    active = np.setdiff1d(np.arange(n_nodes), isolated)

    k_max = max(1, min(active.size - 1, int(np.sqrt(active.size * mean_degree)) + 1))
    if powerlaw_exponent > 2:
        k_min = int(np.floor(mean_degree * (powerlaw_exponent - 2) / (powerlaw_exponent - 1) + 0.5))
    else:
        k_min = 1
    k_min = int(np.clip(k_min, 1, k_max))

    for attempt in range(1, max_retries + 1):
        degrees = _sample_power_law_degrees(active.size, powerlaw_exponent, k_min, k_max, rng)
        if degrees.sum() % 2:
            degrees[rng.integers(active.size)] += 1
        edges = _pair_stubs(active, degrees, rng)
        if edges.shape[0] > 0 and 2 * edges.shape[0] >= degrees.sum() // 2:
            graph = build_graph(n_nodes, edges)
            logger.debug("long-tail graph after %d attempt(s): %r", attempt, graph)
            return graph, degree_histogram(graph)
        logger.info("degree sequence lost too many stubs on attempt %d, resampling", attempt)

    raise InputError(f"no feasible degree sequence after {max_retries} attempts")


def _homophilous_labels(graph, n_communities, region_size, rng):
    """Community ids laid out as graph regions.

    About ``n_nodes / region_size`` seed nodes get random community ids and
    every other node copies the id of its nearest seed (hop distance).
    Nodes no seed can reach draw an id at random.
    """
    labels = rng.integers(n_communities, size=graph.n_nodes)
    n_seeds = min(graph.n_nodes, max(n_communities, graph.n_nodes // region_size))
    seeds = rng.choice(graph.n_nodes, size=n_seeds, replace=False)
    _, _, sources = dijkstra(
        graph.norm_adjacency, directed=False, indices=seeds, unweighted=True,
        min_only=True, return_predecessors=True,
    )
    reached = sources >= 0
    labels[reached] = labels[sources[reached]]
    return labels


def generate_features(graph, n_features=32, kind=BINARY, seed=0, n_communities=8, density=0.1,
                      popularity_exponent=1.0, popularity_weight=0.25, region_size=40):
    """Homophilous node attributes and community labels for ``graph``.

    Community ids cover connected regions of about ``region_size`` nodes.
    Each community has its own prototype; a weak shared popularity profile
    (``popularity_weight`` times a power law over the dimensions) is added
    on top, so the global mean alone does not rank a node's attributes.
    Node vectors are prototype plus noise, averaged with their one-hop
    neighborhood. Binary attributes keep the top ``density`` share of each
    row. Returns ``(features, labels)``.
    """
    if n_features < 1 or n_communities < 1:
        raise InputError("n_features and n_communities must be positive")
    if kind not in (BINARY, CONTINUOUS):
        raise InputError(f"unknown feature kind {kind!r}")
    if not 0 < density <= 1:
        raise InputError(f"density must lie in (0, 1], got {density}")
    if popularity_weight < 0 or region_size < 1:
        raise InputError("popularity_weight must be non-negative and region_size positive")

    rng = np.random.default_rng(seed)
    labels = _homophilous_labels(graph, n_communities, region_size, rng)
    popularity = 1.0 / np.arange(1, n_features + 1) ** popularity_exponent
    popularity = popularity[rng.permutation(n_features)]
    prototypes = rng.gamma(1.0, 1.0, size=(n_communities, n_features)) + popularity_weight * popularity

    raw = prototypes[labels] + 0.3 * rng.standard_normal((graph.n_nodes, n_features))
    smoothed = 0.5 * raw + 0.5 * propagate(graph, raw)
    # Isolated nodes keep their own signal instead of being halved.
    smoothed[graph.degree == 0] = raw[graph.degree == 0]

    if kind == CONTINUOUS:
        return smoothed, labels

    n_active = max(1, int(np.floor(density * n_features + 0.5)))
    top = np.argsort(-smoothed, axis=1, kind="stable")[:, :n_active]
    features = np.zeros_like(smoothed)
    np.put_along_axis(features, top, 1.0, axis=1)
    return features, labels
