import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.exceptions import InputError

logger = logging.getLogger(__name__)

BINARY = "binary"
CONTINUOUS = "continuous"


@dataclass
class EvalReport:
    """Reconstruction quality over a set of evaluated nodes."""

    recall_at: dict = field(default_factory=dict)
    ndcg_at: dict = field(default_factory=dict)
    rmse: Optional[float] = None
    corr: Optional[float] = None
    n_eval_nodes: int = 0
    feature_kind: str = BINARY
    accuracy: Optional[float] = None

    def as_flat(self):
        """Flat ``key -> value`` mapping with stable key order."""
        flat = {"feature_kind": self.feature_kind, "n_eval_nodes": self.n_eval_nodes}
        for k in sorted(self.recall_at):
            flat[f"recall@{k}"] = self.recall_at[k]
        for k in sorted(self.ndcg_at):
            flat[f"ndcg@{k}"] = self.ndcg_at[k]
        if self.rmse is not None:
            flat["rmse"] = self.rmse
        if self.corr is not None:
            flat["corr"] = self.corr
        if self.accuracy is not None:
            flat["accuracy"] = self.accuracy
        return flat


def _pair(predicted, truth):
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.ndim == 1:
        predicted = predicted.reshape(1, -1)
    if truth.ndim == 1:
        truth = truth.reshape(1, -1)
    if predicted.shape != truth.shape:
        raise InputError(f"predicted {predicted.shape} and truth {truth.shape} differ in shape")
    return predicted, truth


def _ranked_hits(predicted, truth, k):
    """Relevance of the top-k dimensions per evaluable node, plus positive counts."""
    predicted, truth = _pair(predicted, truth)
    n_features = truth.shape[1]
    if int(k) != k or k < 1:
        raise InputError(f"k must be a positive integer, got {k}")
    if k > n_features:
        raise InputError(f"k={k} exceeds the {n_features} feature dimensions")
    if not np.isin(truth, (0.0, 1.0)).all():
        raise InputError("ranking metrics need binary truth values")

    positives = truth.sum(axis=1)
    evaluable = positives > 0
    if not evaluable.any():
        raise InputError("no evaluable nodes: every truth row is all zero")

    # Stable sort on negated scores: descending, ties by ascending dimension.
    order = np.argsort(-predicted[evaluable], axis=1, kind="stable")[:, : int(k)]
    hits = np.take_along_axis(truth[evaluable], order, axis=1)
    return hits, positives[evaluable]


def recall_at_k(predicted, truth, k):
    hits, positives = _ranked_hits(predicted, truth, k)
    return float(np.mean(hits.sum(axis=1) / positives))


def ndcg_at_k(predicted, truth, k):
    hits, positives = _ranked_hits(predicted, truth, k)
    discounts = 1.0 / np.log2(np.arange(2, int(k) + 2))
    dcg = hits @ discounts
    ideal = np.cumsum(discounts)[np.minimum(positives, k).astype(np.int64) - 1]
    return float(np.mean(dcg / ideal))


def rmse(predicted, truth):
    predicted, truth = _pair(predicted, truth)
    if predicted.size == 0:
        raise InputError("rmse over an empty evaluation set")
    return float(np.sqrt(np.mean((predicted - truth) ** 2)))


def corr(predicted, truth):
    """Mean per-node Pearson correlation across feature dimensions.

    Rows where either vector is constant contribute 0.
    """
    predicted, truth = _pair(predicted, truth)
    if predicted.shape[0] == 0:
        raise InputError("corr over an empty evaluation set")
    if predicted.shape[1] < 2:
        raise InputError("corr needs at least two feature dimensions")

    p = predicted - predicted.mean(axis=1, keepdims=True)
    t = truth - truth.mean(axis=1, keepdims=True)
    varying = (np.ptp(predicted, axis=1) > 0) & (np.ptp(truth, axis=1) > 0)

    scores = np.zeros(predicted.shape[0])
    num = np.sum(p[varying] * t[varying], axis=1)
    den = np.sqrt(np.sum(p[varying] ** 2, axis=1) * np.sum(t[varying] ** 2, axis=1))
    scores[varying] = np.clip(num / den, -1.0, 1.0)
    return float(np.mean(scores))


def evaluate_reconstruction(predicted, truth, nodes=None, kind=BINARY, k_list=(10, 20, 50)):
    """Score reconstructed rows against ground truth on ``nodes``.

    Binary features get Recall@k and nDCG@k for every k that fits the
    feature dimension; continuous features get RMSE and CORR.
    """
    predicted, truth = _pair(predicted, truth)
    if nodes is not None:
        nodes = np.asarray(nodes, dtype=np.int64)
        predicted, truth = predicted[nodes], truth[nodes]
    if predicted.shape[0] == 0:
        raise InputError("no nodes to evaluate")

    report = EvalReport(n_eval_nodes=int(predicted.shape[0]), feature_kind=kind)
    if kind == BINARY:
        for k in k_list:
            if k > truth.shape[1]:
                logger.warning("skipping k=%d, only %d feature dimensions", k, truth.shape[1])
                continue
            report.recall_at[int(k)] = recall_at_k(predicted, truth, k)
            report.ndcg_at[int(k)] = ndcg_at_k(predicted, truth, k)
    elif kind == CONTINUOUS:
        report.rmse = rmse(predicted, truth)
        report.corr = corr(predicted, truth)
    else:
        raise InputError(f"unknown feature kind {kind!r}")
    return report
