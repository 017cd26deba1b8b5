"""Ranking metrics and the paired Wilcoxon signed-rank test."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .core import DataError

EXACT_MAX_N = 20


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError("scores and labels must be 1-D and of equal length")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must be binary")
    return s, y.astype(np.int64)


def _tie_groups(s, descending: bool):
    order = np.argsort(-s if descending else s, kind="stable")
    ss = s[order]
    bounds = np.flatnonzero(np.diff(ss) != 0) + 1
    return order, np.concatenate([[0], bounds, [len(ss)]])


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC; tied positive/negative pairs count one half."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUROC needs both classes")
    order, edges = _tie_groups(s, descending=False)
    ys = y[order]
    twice = 0  # doubled concordance count keeps the sweep in exact integers
    neg_below = 0
    for a, b in zip(edges[:-1], edges[1:]):
        pos = int(ys[a:b].sum())
        neg = (b - a) - pos
        twice += pos * (2 * neg_below + neg)
        neg_below += neg
    return twice / (2.0 * n_pos * n_neg)


def auprc(scores, labels) -> float:
    """Non-interpolated average precision, tied scores swept as one step."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise DataError("AUPRC needs at least one positive")
    order, edges = _tie_groups(s, descending=True)
    ys = y[order]
    tp = fp = 0
    area = 0.0
    recall_prev = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        pos = int(ys[a:b].sum())
        tp += pos
        fp += (b - a) - pos
        recall = tp / n_pos
        area += (recall - recall_prev) * (tp / (tp + fp))
        recall_prev = recall
    return float(area)


class WilcoxonResult(NamedTuple):
    statistic: float
    pvalue: float
    w_plus: float
    w_minus: float
    n: int
    method: str


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def signed_rank_null_counts(doubled_ranks) -> np.ndarray:
    """``counts[s]`` = number of sign patterns whose positive doubled-rank sum is ``s``."""
    r = [int(x) for x in doubled_ranks]
    counts = np.zeros(sum(r) + 1, dtype=np.int64)
    counts[0] = 1
    for x in r:
        counts[x:] += counts[:-x].copy()
    return counts


def wilcoxon_signed_rank(a, b, exact_max_n: int = EXACT_MAX_N) -> WilcoxonResult:
    """Two-sided paired signed-rank test on ``a - b`` (zero differences dropped).

    Exact null distribution (with tie-averaged ranks) up to ``exact_max_n``
    nonzero pairs, normal approximation with tie and continuity
    corrections above that.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("a and b must be 1-D and of equal length")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise DataError("degenerate pairing: all differences are zero")
    if n < 5:
        raise DataError(f"only {n} nonzero differences; need at least 5")
    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= exact_max_n:
        counts = signed_rank_null_counts(np.rint(2 * ranks))
        tail = counts[: int(round(2 * w)) + 1].sum()
        p = min(1.0, 2.0 * tail / float(2 ** n))
        return WilcoxonResult(w, p, w_plus, w_minus, n, "exact")
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    z = max(0.0, abs(w - mean) - 0.5) / math.sqrt(var)
    p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return WilcoxonResult(w, p, w_plus, w_minus, n, "normal")
