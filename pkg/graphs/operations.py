import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from core.exceptions import InputError
from graphs.graph import as_feature_matrix

logger = logging.getLogger(__name__)


def row_blocks(matrix, threads):
    """Contiguous CSR row slices of ``matrix``, one per worker."""
    bounds = np.linspace(0, matrix.shape[0], threads + 1).astype(np.int64)
    return tuple(
        (int(start), int(stop), matrix[start:stop])
        for start, stop in zip(bounds[:-1], bounds[1:])
        if stop > start
    )


def blocked_product(matrix, x, blocks=None):
    """Return ``matrix @ x``, one worker per entry of ``blocks`` when given.

    Every output row is owned by one block, so the result is bit-identical
    to the single-threaded product.
    """
    if not blocks:
        return matrix @ x
    out = np.empty((matrix.shape[0], x.shape[1]), dtype=np.result_type(x.dtype, np.float64))

    def work(block):
        start, stop, rows = block
        out[start:stop] = rows @ x

    with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
        list(pool.map(work, blocks))
    return out


def use_threads(n_rows, threads):
    return threads is not None and threads > 1 and n_rows >= 2 * threads


def propagate(graph, x, threads=1):
    """Return Ã @ x.

    With ``threads`` > 1 the rows are split into contiguous blocks and each
    block is multiplied on its own worker. The slices are kept on the graph.
    """
    if getattr(x, "ndim", None) != 2 or x.shape[0] != graph.n_nodes:
        x = as_feature_matrix(x, graph.n_nodes, name="x")
    if not use_threads(graph.n_nodes, threads):
        return graph.norm_adjacency @ x

    threads = int(threads)
    blocks = graph.row_block_cache.get(threads)
    if blocks is None:
        blocks = graph.row_block_cache[threads] = row_blocks(graph.norm_adjacency, threads)
    return blocked_product(graph.norm_adjacency, x, blocks)


def column_means(x):
    """Mean row of ``x``; this is the global "virtual edge" message."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InputError("column_means needs a non-empty 2-D matrix")
    return x.mean(axis=0)


def degree_histogram(graph):
    """Distinct degree values and how many nodes have each."""
    values, counts = np.unique(graph.degree, return_counts=True)
    return values, counts


def low_degree_fraction(graph, threshold=5):
    """Fraction of nodes whose degree is at most ``threshold``."""
    return float(np.mean(graph.degree <= threshold))
