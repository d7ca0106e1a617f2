"""Confusion-matrix metrics. Rows are true classes, columns predictions."""
from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    pass


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def _check(cm) -> np.ndarray:
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise MetricError("confusion matrix must be square")
    if np.any(cm < 0):
        raise MetricError("confusion matrix must be nonnegative")
    if cm.sum() == 0:
        raise MetricError("confusion matrix is all zero")
    return cm.astype(np.float64)


def per_class_prf(cm) -> dict[str, np.ndarray]:
    """Precision, recall, F1 and support per class; 0/0 counts as 0."""
    cm = _check(cm)
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return {"precision": precision, "recall": recall, "f1": f1, "support": support}


def weighted_f1(cm) -> float:
    """sum_c (n_c / N) F1_c; classes absent from the truth carry zero weight."""
    prf = per_class_prf(cm)
    s = prf["support"]
    return float((s / s.sum()) @ prf["f1"])


def sensitivity(cm, positive: int = 0) -> float:
    """True-positive rate of the positive class: TP / (TP + FN)."""
    cm = _check(cm)
    row = cm[positive].sum()
    return float(cm[positive, positive] / row) if row else float("nan")


def specificity(cm, positive: int = 0) -> float:
    """True-negative rate: negatives (all other classes) predicted as any negative class."""
    cm = _check(cm)
    neg = [i for i in range(len(cm)) if i != positive]
    block = cm[np.ix_(neg, neg)]
    total = cm[neg].sum()
    return float(block.sum() / total) if total else float("nan")


def accuracy(cm) -> float:
    cm = _check(cm)
    return float(np.trace(cm) / cm.sum())


def weighted_f1_from_predictions(y_true, y_pred) -> float:
    """Weighted F1 straight from label vectors, without building a confusion matrix."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if len(y_true) == 0:
        raise MetricError("no predictions")
    total = 0.0
    for c in np.unique(y_true):
        tp = np.sum((y_true == c) & (y_pred == c))
        fp = np.sum((y_true != c) & (y_pred == c))
        fn = np.sum((y_true == c) & (y_pred != c))
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        total += np.sum(y_true == c) / len(y_true) * f1
    return float(total)


def misclassification_table(cm, labels) -> list[dict]:
    """Per true class: most frequent wrong prediction and its rate among that class."""
    cm = np.asarray(cm, dtype=np.float64)
    rows = []
    for i, lab in enumerate(labels):
        n = cm[i].sum()
        off = cm[i].copy()
        off[i] = -1.0
        j = int(np.argmax(off))
        rate = float(cm[i, j] / n) if n and cm[i, j] > 0 else 0.0
        rows.append({"true": lab, "most_mispredicted": labels[j] if rate > 0 else None,
                     "rate": rate})
    return sorted(rows, key=lambda r: (-r["rate"], str(r["true"])))
