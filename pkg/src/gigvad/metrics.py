"""Frame-level ranking and classification metrics."""

from __future__ import annotations

import numpy as np

from .errors import MetricError


def _pooled(values) -> np.ndarray:
    if isinstance(values, np.ndarray):
        return values.ravel()
    values = list(values)
    if values and isinstance(values[0], (np.ndarray, list, tuple)):
        return np.concatenate([np.asarray(v).ravel() for v in values])
    return np.asarray(values)


def roc_auc(scores, labels) -> float:
    """Area under the frame-based ROC curve over the pooled frames.

    Equals the probability that a random positive outranks a random negative,
    ties counted half; accepts single arrays or sequences of per-video arrays.
    """
    s = _pooled(scores).astype(np.float64)
    y = _pooled(labels).astype(bool)
    if s.shape != y.shape:
        raise MetricError("scores and labels must align")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both positive and negative frames")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    changes = np.nonzero(np.diff(sorted_s))[0] + 1
    starts = np.concatenate(([0], changes))
    ends = np.concatenate((changes, [s.size]))
    # average 1-based rank within each tie group; exact halves in float64
    group_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(s.size)
    ranks[order] = np.repeat(group_rank, ends - starts)
    pos_rank_sum = ranks[y].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def f1_metrics(pred, truth, n_classes: int) -> tuple[np.ndarray, float]:
    """Per-class F1 over anomaly classes plus their mean.

    Class ids are 0 (normal) .. n_classes. F1 is 0 whenever a precision or
    recall denominator vanishes.
    """
    p = _pooled(pred).astype(np.int64)
    t = _pooled(truth).astype(np.int64)
    if p.shape != t.shape:
        raise MetricError("predictions and truth must align")
    f1 = np.zeros(n_classes)
    for cls in range(1, n_classes + 1):
        tp = int(np.sum((p == cls) & (t == cls)))
        fp = int(np.sum((p == cls) & (t != cls)))
        fn = int(np.sum((p != cls) & (t == cls)))
        if tp + fp == 0 or tp + fn == 0:
            continue
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        if precision + recall > 0:
            f1[cls - 1] = 2.0 * precision * recall / (precision + recall)
    return f1, float(f1.mean())
