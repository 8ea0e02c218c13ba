"""Confusion-matrix metrics and ranking AUC for imbalanced evaluation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def confusion_counts(scores, labels, threshold: float = 0.5) -> tuple[int, int, int, int]:
    """Counts with prediction = score >= threshold. Returns (TP, FP, TN, FN)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValueError(f"scores shape {s.shape} != labels shape {y.shape}")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    pred = s >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    tn = int(np.sum(~pred & ~pos))
    fn = int(np.sum(~pred & pos))
    return tp, fp, tn, fn


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both inputs are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """0/0 cases are defined as 0 rather than raising."""
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return precision, recall, f1_score(precision, recall)


def roc_auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative, ties 1/2.

    Computed from mid-ranks in O(n log n); identical to exhaustive pair
    counting.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n = s.size
    n_pos = int(np.sum(y == 1))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: both classes must be present")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    counts = np.diff(np.r_[starts, n])
    midranks = starts + (counts + 1) / 2.0  # 1-based average rank per tie group
    ranks = np.empty(n)
    ranks[order] = np.repeat(midranks, counts)
    rank_sum = float(ranks[np.asarray(y) == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def report_from_scores(scores, labels, threshold: float = 0.5) -> MetricsReport:
    """Full report; a single-class dataset gets the uninformative AUC 0.5
    (roc_auc itself refuses single-class input)."""
    tp, fp, tn, fn = confusion_counts(scores, labels, threshold)
    precision, recall, f1 = precision_recall_f1(tp, fp, fn)
    total = tp + fp + tn + fn
    y = np.asarray(labels)
    single_class = np.all(y == 1) or np.all(y == 0)
    return MetricsReport(
        accuracy=(tp + tn) / total,
        precision=precision,
        recall=recall,
        f1=f1,
        auc=0.5 if single_class else roc_auc(scores, labels),
        tp=tp, fp=fp, tn=tn, fn=fn,
    )
