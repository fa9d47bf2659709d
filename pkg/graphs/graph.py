import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from core.exceptions import InputError

logger = logging.getLogger(__name__)


def _frozen(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, unweighted graph with its symmetric normalized adjacency.

    ``edges`` holds every undirected edge once as ``(u, v)`` with ``u < v``.
    ``norm_adjacency`` is D^-1/2 A D^-1/2 in CSR form; rows of isolated
    nodes are empty. The Laplacian I - Ã is never built.
    """

    n_nodes: int
    edges: np.ndarray
    degree: np.ndarray
    norm_adjacency: sp.csr_matrix
    # Per-thread-count CSR row slices used by threaded propagation.
    row_block_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def n_edges(self):
        return int(self.edges.shape[0])

    def neighbors(self, node):
        """Sorted neighbor indices of ``node``."""
        if not 0 <= node < self.n_nodes:
            raise InputError(f"node {node} out of range for {self.n_nodes} nodes")
        start, stop = self.norm_adjacency.indptr[node], self.norm_adjacency.indptr[node + 1]
        return self.norm_adjacency.indices[start:stop].copy()

    def isolated_nodes(self):
        return np.flatnonzero(self.degree == 0)

    def __repr__(self):
        return f"Graph(n_nodes={self.n_nodes}, n_edges={self.n_edges})"


@dataclass(frozen=True, eq=False)
class KnownSet:
    """Partition of the nodes into known (V_k) and unknown (V_u) indices."""

    known: np.ndarray
    n_nodes: int

    def __post_init__(self):
        known = np.asarray(self.known)
        if known.size == 0:
            known = np.zeros(0, dtype=np.int64)
        if known.ndim != 1 or not np.issubdtype(known.dtype, np.integer):
            raise InputError("known indices must be a 1-D integer sequence")
        known = np.unique(known.astype(np.int64))
        if known.size and (known[0] < 0 or known[-1] >= self.n_nodes):
            raise InputError(f"known index out of range for {self.n_nodes} nodes")
        object.__setattr__(self, "known", _frozen(known))

    @classmethod
    def from_mask(cls, mask):
        mask = np.asarray(mask, dtype=bool)
        return cls(np.flatnonzero(mask), int(mask.shape[0]))

    @property
    def mask(self):
        """Boolean diagonal of the selector I_k."""
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.known] = True
        return mask

    @property
    def unknown(self):
        return np.flatnonzero(~self.mask)

    def __len__(self):
        return int(self.known.size)

    def __repr__(self):
        return f"KnownSet(known={len(self)}, n_nodes={self.n_nodes})"


def as_feature_matrix(x, n_nodes=None, name="features"):
    """Validate ``x`` as a finite dense N x F float64 matrix.

    Returns a C-contiguous float64 array, copying only when needed.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2:
        raise InputError(f"{name} must be a 2-D matrix, got {x.ndim} dimensions")
    if n_nodes is not None and x.shape[0] != n_nodes:
        raise InputError(f"{name} has {x.shape[0]} rows but the graph has {n_nodes} nodes")
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} contains NaN or infinite entries")
    return np.ascontiguousarray(x)


def build_graph(n_nodes, edges):
    """Build a :class:`Graph` from an edge list.

    Self-loops are dropped and ``(u, v)`` / ``(v, u)`` duplicates collapse
    into a single edge.
    """
    n_nodes = int(n_nodes)
    if n_nodes <= 0:
        raise InputError("a graph needs at least one node")

    edges = np.asarray(edges, dtype=np.int64) if len(edges) else np.zeros((0, 2), dtype=np.int64)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise InputError("edges must be a list of (u, v) pairs")
    if edges.size and (edges.min() < 0 or edges.max() >= n_nodes):
        bad = edges[(edges < 0).any(axis=1) | (edges >= n_nodes).any(axis=1)][0]
        raise InputError(f"edge ({bad[0]}, {bad[1]}) has an endpoint outside [0, {n_nodes})")

    edges = edges[edges[:, 0] != edges[:, 1]]
    edges = np.unique(np.sort(edges, axis=1), axis=0) if edges.size else edges

    degree = np.bincount(edges.ravel(), minlength=n_nodes).astype(np.int64)

    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    values = 1.0 / np.sqrt(degree[rows].astype(np.float64) * degree[cols])
    norm_adjacency = sp.csr_matrix((values, (rows, cols)), shape=(n_nodes, n_nodes))
    norm_adjacency.sort_indices()

    logger.debug("built graph with %d nodes and %d edges", n_nodes, edges.shape[0])
    return Graph(
        n_nodes=n_nodes,
        edges=_frozen(edges),
        degree=_frozen(degree),
        norm_adjacency=norm_adjacency,
    )
