"""Ranking metrics with tie-aware definitions.

AUC counts ties as half a win. AP averages, over positives, the precision
at that positive's score threshold (everything scoring at least as high).
MRR ranks the true item at its mid-rank among tied negatives.
"""

from __future__ import annotations

import math

import numpy as np


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.r_[0, np.flatnonzero(np.diff(xs)) + 1]
    ends = np.r_[starts[1:], len(xs)]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x), dtype=np.float64)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    if len(s) != len(y):
        raise ValueError(f"{len(s)} scores vs {len(y)} labels")
    return s, y


def roc_auc(scores, labels) -> float:
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    u = _midranks(s)[y].sum() - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def average_precision(scores, labels) -> float:
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-s, kind="mergesort")
    ss, yy = s[order], y[order]
    ends = np.r_[np.flatnonzero(np.diff(ss)) + 1, len(ss)]
    tp = np.cumsum(yy)[ends - 1]
    precision = tp / ends
    pos_in_group = np.diff(np.r_[0, tp])
    return math.fsum(np.repeat(precision, pos_in_group)) / n_pos


def reciprocal_ranks(pos_scores, neg_scores) -> np.ndarray:
    """``1/rank`` of each positive against its own row of negatives."""
    p = np.asarray(pos_scores, dtype=np.float64).reshape(-1, 1)
    n = np.asarray(neg_scores, dtype=np.float64)
    if n.ndim != 2 or n.shape[0] != p.shape[0]:
        raise ValueError(f"negatives must be (n, K), got {n.shape} for {p.shape[0]} positives")
    rank = 1.0 + (n > p).sum(axis=1) + 0.5 * (n == p).sum(axis=1)
    return 1.0 / rank


def mrr(pos_scores, neg_scores) -> float:
    rr = reciprocal_ranks(pos_scores, neg_scores)
    return math.fsum(rr) / len(rr) if len(rr) else float("nan")


def f1_micro(y_true, y_pred) -> float:
    """Micro-F1 for single-label multi-class (equals accuracy)."""
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if len(t) == 0:
        return float("nan")
    tp = int((t == p).sum())
    fp = fn = len(t) - tp
    return 2 * tp / (2 * tp + fp + fn)
