"""Accuracy, F1 and ROC AUC with crossing (label 1) as the positive class."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def _check(a, b, name_a="preds", name_b="labels"):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"{name_a} and {name_b} must be 1-D of equal length, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise ValueError("empty inputs")
    return a, b


def confusion(preds, labels) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn)."""
    p, y = _check(preds, labels)
    p = p.astype(int)
    y = y.astype(int)
    tp = int(np.sum((p == 1) & (y == 1)))
    fp = int(np.sum((p == 1) & (y == 0)))
    tn = int(np.sum((p == 0) & (y == 0)))
    fn = int(np.sum((p == 0) & (y == 1)))
    return tp, fp, tn, fn


def accuracy(preds, labels) -> float:
    p, y = _check(preds, labels)
    return float(np.mean(p.astype(int) == y.astype(int)))


def f1_score(preds, labels) -> float:
    """Harmonic mean of precision and recall; 0.0 when there are no positive predictions or labels."""
    tp, fp, _, fn = confusion(preds, labels)
    if tp == 0:
        return 0.0
    # same as 2pr / (p + r), but with a single rounding
    return 2 * tp / (2 * tp + fp + fn)


def auc_roc(scores, labels) -> float:
    """Mann-Whitney form of the ROC area; tied scores count one half."""
    s, y = _check(scores, labels, "scores")
    y = y.astype(int)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes in labels")
    ranks = rankdata(s.astype(np.float64), method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
