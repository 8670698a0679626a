"""Exact ranking metrics for imbalanced binary labels.

ROC AUC is the Mann-Whitney statistic (ties count half), computed from
average ranks in O(N log N).  PR AUC is the step-wise average-precision
estimator with equal scores collapsed into one threshold group; trapezoidal
interpolation over PR space is deliberately avoided because it overestimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    roc_auc: float
    pr_auc: float
    n_pos: int
    n_neg: int
    scores: list[float]
    labels: list[int]


def _validate(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or y.ndim != 1 or len(s) != len(y):
        raise ValueError("scores and labels must be equal-length vectors")
    if len(s) == 0:
        raise ValueError("empty inputs")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def roc_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 * P(tie), over all pos/neg pairs."""
    s, y = _validate(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"ROC AUC undefined for a single class (pos={n_pos}, neg={n_neg})")

    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and sorted_s[j] == sorted_s[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + 1 + j)  # average of 1-based ranks i+1..j
        i = j
    rank_sum = ranks[y == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(scores, labels) -> float:
    """Average precision: sum of precision-at-threshold times recall increment."""
    s, y = _validate(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("PR AUC undefined without positive samples")

    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    s_sorted = s[order]
    tp = 0
    fp = 0
    ap = 0.0
    prev_recall = 0.0
    i = 0
    while i < len(s_sorted):
        j = i
        while j < len(s_sorted) and s_sorted[j] == s_sorted[i]:
            j += 1
        group_pos = int(y_sorted[i:j].sum())
        tp += group_pos
        fp += (j - i) - group_pos
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return ap


def report(scores, labels) -> MetricsReport:
    s, y = _validate(scores, labels)
    return MetricsReport(
        roc_auc=roc_auc(s, y),
        pr_auc=pr_auc(s, y),
        n_pos=int(y.sum()),
        n_neg=int(len(y) - y.sum()),
        scores=[float(v) for v in s],
        labels=[int(v) for v in y],
    )
