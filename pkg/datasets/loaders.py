import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from core.exceptions import InputError, ParseError
from datasets.formats import ARBF_DTYPE, ARBF_HEADER, ARBF_MAGIC, ARBF_VERSION, MAX_NODE_INDEX
from evaluation.metrics import BINARY, CONTINUOUS
from graphs.graph import Graph, build_graph

logger = logging.getLogger(__name__)

_HEADER = re.compile(r"^N\s+(\S+)$")


@dataclass
class DatasetBundle:
    graph: Graph
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    feature_kind: str = BINARY

    def __post_init__(self):
        if self.features.shape[0] != self.graph.n_nodes:
            raise InputError(
                f"features have {self.features.shape[0]} rows, graph has {self.graph.n_nodes} nodes"
            )
        if self.labels is not None and self.labels.shape[0] != self.graph.n_nodes:
            raise InputError(f"{self.labels.shape[0]} labels for {self.graph.n_nodes} nodes")
        if self.feature_kind == BINARY and not np.isin(self.features, (0.0, 1.0)).all():
            raise InputError("binary features may only contain 0 and 1")


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror or exc}", path=path) from exc


def _read_lines(path):
    raw = _read_bytes(path)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("file is not valid UTF-8", path=path, offset=exc.start) from exc
    return text.splitlines()


def _data_lines(path):
    """Yield (line number, stripped text) for lines that are not blank or comments."""
    for number, line in enumerate(_read_lines(path), start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            yield number, stripped


def _node_index(token, path, number):
    if not (token.isascii() and token.isdigit()):
        raise ParseError(f"{token!r} is not a non-negative integer node index", path=path, line=number)
    value = int(token)
    if value >= MAX_NODE_INDEX:
        raise ParseError(f"node index {token} overflows", path=path, line=number)
    return value


def load_edge_list(path):
    """Read an edge list: one ``u v`` pair per line.

    An optional first data line ``N <count>`` fixes the node count;
    otherwise it is one more than the largest index seen.
    """
    declared = None
    edges = []
    for number, line in _data_lines(path):
        header = _HEADER.match(line)
        if header:
            if declared is not None or edges:
                raise ParseError("the N header must come before any edge", path=path, line=number)
            declared = _node_index(header.group(1), path, number)
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise ParseError(f"expected two node indices, found {len(tokens)} fields", path=path, line=number)
        u, v = (_node_index(token, path, number) for token in tokens)
        if declared is not None and max(u, v) >= declared:
            raise ParseError(f"edge ({u}, {v}) exceeds the declared {declared} nodes", path=path, line=number)
        edges.append((u, v))

    n_nodes = declared if declared is not None else 1 + max((max(e) for e in edges), default=-1)
    if n_nodes == 0:
        raise ParseError("the edge list defines no nodes", path=path)
    logger.info("read %d edges over %d nodes from %s", len(edges), n_nodes, path)
    return n_nodes, edges


def remap_edge_list(path):
    """Read an edge list with arbitrary node ids.

    Ids are numbered 0..N-1 in first-seen order; returns
    ``(n_nodes, edges, id_map)`` with ``id_map`` from raw id to index.
    """
    id_map = {}
    edges = []
    for number, line in _data_lines(path):
        tokens = line.split()
        if len(tokens) != 2:
            raise ParseError(f"expected two node ids, found {len(tokens)} fields", path=path, line=number)
        pair = tuple(id_map.setdefault(token, len(id_map)) for token in tokens)
        edges.append(pair)
    if not id_map:
        raise ParseError("the edge list defines no nodes", path=path)
    return len(id_map), edges, id_map


def _split_row(line, delimiter):
    if delimiter is None:
        return line.split()
    return [cell.strip() for cell in line.split(delimiter)]


def _load_text_matrix(path):
    rows = []
    delimiter = None
    width = None
    for number, line in _data_lines(path):
        if width is None:
            delimiter = "," if "," in line else "\t" if "\t" in line else None
        cells = _split_row(line, delimiter)
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(f"ragged row: {len(cells)} values, expected {width}", path=path, line=number)
        try:
            values = [float(cell) for cell in cells]
        except ValueError as exc:
            raise ParseError(f"not a number: {exc}", path=path, line=number) from exc
        if not all(np.isfinite(values)):
            raise ParseError("NaN or infinite value", path=path, line=number)
        rows.append(values)
    if not rows:
        raise ParseError("the feature file holds no rows", path=path)
    return np.array(rows, dtype=np.float64)


def _load_binary_matrix(path, raw):
    if len(raw) < ARBF_HEADER.size:
        raise ParseError("truncated ARBF header", path=path, offset=len(raw))
    magic, version, n_nodes, n_features = ARBF_HEADER.unpack_from(raw)
    if magic != ARBF_MAGIC:
        raise ParseError(f"bad magic {magic!r}", path=path, offset=0)
    if version != ARBF_VERSION:
        raise ParseError(f"unsupported ARBF version {version}", path=path, offset=4)
    expected = ARBF_HEADER.size + 8 * n_nodes * n_features
    if len(raw) != expected:
        raise ParseError(
            f"header declares {n_nodes}x{n_features} values ({expected} bytes) but file has {len(raw)} bytes",
            path=path, offset=ARBF_HEADER.size,
        )
    values = np.frombuffer(raw, dtype=ARBF_DTYPE, offset=ARBF_HEADER.size).astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ParseError(f"non-finite value {values[bad[0]]}", path=path, offset=ARBF_HEADER.size + 8 * int(bad[0]))
    return values.reshape(n_nodes, n_features)


def load_feature_matrix(path):
    """Read a feature matrix from ARBF binary or delimited text.

    Files starting with the ARBF magic, or named ``*.arbf``, are read as
    binary; anything else as comma, tab or whitespace separated text.
    """
    raw = _read_bytes(path)
    if raw[:4] == ARBF_MAGIC or Path(path).suffix.lower() == ".arbf":
        matrix = _load_binary_matrix(path, raw)
    else:
        matrix = _load_text_matrix(path)
    logger.info("read %dx%d feature matrix from %s", matrix.shape[0], matrix.shape[1], path)
    return matrix


def _read_ints(path, what):
    values = []
    for number, line in _data_lines(path):
        try:
            value = int(line)
        except ValueError as exc:
            raise ParseError(f"{line!r} is not an integer {what}", path=path, line=number) from exc
        if value < 0:
            raise ParseError(f"negative {what} {value}", path=path, line=number)
        values.append(value)
    return np.array(values, dtype=np.int64)


def load_labels(path):
    """One integer class id per line."""
    return _read_ints(path, "class id")


def load_node_indices(path):
    return _read_ints(path, "node index")


def infer_kind(features):
    return BINARY if np.isin(features, (0.0, 1.0)).all() else CONTINUOUS


def load_dataset(graph_path, features_path, labels_path=None, kind="auto", remap=False):
    """Load a graph, its ground-truth features and optional labels.

    With ``remap`` the edge list may use arbitrary node ids; the id map is
    returned as the second element of the result.
    """
    id_map = None
    if remap:
        n_nodes, edges, id_map = remap_edge_list(graph_path)
    else:
        n_nodes, edges = load_edge_list(graph_path)
    features = load_feature_matrix(features_path)
    if features.shape[0] > n_nodes and not remap:
        # Trailing featured nodes without edges are isolated.
        n_nodes = features.shape[0]
    graph = build_graph(n_nodes, edges)
    labels = load_labels(labels_path) if labels_path else None
    if kind == "auto":
        kind = infer_kind(features)
    try:
        bundle = DatasetBundle(graph=graph, features=features, labels=labels, feature_kind=kind)
    except InputError as exc:
        raise ParseError(str(exc), path=features_path) from exc
    return bundle, id_map
