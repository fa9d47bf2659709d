import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from datasets.formats import ARBF_DTYPE, ARBF_HEADER, ARBF_MAGIC, ARBF_VERSION

logger = logging.getLogger(__name__)


def atomic_write(path, payload):
    """Write ``payload`` (bytes or str) to ``path`` via a temp file and rename.

    A crash mid-write leaves any previous file at ``path`` untouched.
    """
    path = Path(path)
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except OSError as exc:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror or exc}") from exc
    logger.debug("wrote %d bytes to %s", len(payload), path)


def encode_features(matrix):
    matrix = np.ascontiguousarray(matrix, dtype=ARBF_DTYPE)
    n_nodes, n_features = matrix.shape
    return ARBF_HEADER.pack(ARBF_MAGIC, ARBF_VERSION, n_nodes, n_features) + matrix.tobytes()


def save_features(path, matrix):
    """Write ``matrix`` in the ARBF binary format."""
    atomic_write(path, encode_features(np.asarray(matrix)))


def save_features_text(path, matrix):
    lines = [",".join(repr(float(value)) for value in row) for row in np.asarray(matrix)]
    atomic_write(path, "\n".join(lines) + "\n")


def render_report(data, fmt="json"):
    """Structured text for a serialized report.

    ``json`` sorts keys; ``text`` writes one ``key=value`` line per entry
    with nested keys joined by dots.
    """
    if fmt == "json":
        return json.dumps(data, sort_keys=True, indent=2) + "\n"

    lines = []

    def flatten(prefix, value):
        if isinstance(value, dict):
            for key in sorted(value, key=str):
                flatten(f"{prefix}.{key}" if prefix else str(key), value[key])
        else:
            lines.append(f"{prefix}={value}")

    flatten("", data)
    return "\n".join(lines) + "\n"


def save_report(path, data, fmt="json"):
    atomic_write(path, render_report(data, fmt))


def save_edge_list(path, graph):
    lines = [f"N {graph.n_nodes}"] + [f"{u} {v}" for u, v in graph.edges]
    atomic_write(path, "\n".join(lines) + "\n")


def save_labels(path, labels):
    atomic_write(path, "".join(f"{int(label)}\n" for label in labels))


def save_id_map(path, id_map):
    atomic_write(path, "".join(f"{raw}\t{index}\n" for raw, index in id_map.items()))
