"""Classification metrics, Pearson correlation and permutation importance."""
from dataclasses import dataclass

import numpy as np

from .errors import DataError, MetricUndefinedError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    @property
    def tpr(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def fpr(self):
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else float("nan")


def to_classes(predictions, threshold=0.5):
    """Probabilities (vector or per-class matrix) or labels -> class indices."""
    p = np.asarray(predictions)
    if p.ndim == 2:
        return p.argmax(axis=1) if p.shape[1] > 1 else (p[:, 0] >= threshold).astype(np.int64)
    if np.issubdtype(p.dtype, np.floating) and np.any((p > 0) & (p < 1)):
        return (p >= threshold).astype(np.int64)
    return p.astype(np.int64)


def confusion_counts(labels, predictions, threshold=0.5):
    y = np.asarray(labels).astype(np.int64)
    yhat = to_classes(predictions, threshold)
    return ConfusionCounts(
        tp=int(np.sum((y == 1) & (yhat == 1))),
        tn=int(np.sum((y == 0) & (yhat == 0))),
        fp=int(np.sum((y == 0) & (yhat == 1))),
        fn=int(np.sum((y == 1) & (yhat == 0))),
    )


def accuracy(labels, predictions, threshold=0.5):
    """Fraction of correctly classified samples."""
    y = np.asarray(labels).astype(np.int64)
    if y.size == 0:
        raise DataError("accuracy of an empty sample is undefined")
    yhat = to_classes(predictions, threshold)
    if yhat.shape[0] != y.shape[0]:
        raise DataError(f"length mismatch: {y.shape[0]} labels vs {yhat.shape[0]} predictions")
    return float(np.mean(y == yhat))


def _binary_auc(y, s):
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUC needs both classes present")
    # walk distinct score values upwards; every positive beats the negatives
    # strictly below it and ties count one half
    order = np.argsort(s, kind="mergesort")
    s_sorted, pos_sorted = s[order], pos[order]
    _, starts = np.unique(s_sorted, return_index=True)
    ends = np.append(starts[1:], s.size)
    wins = 0.0
    neg_below = 0
    for lo, hi in zip(starts, ends):
        p = int(pos_sorted[lo:hi].sum())
        n = (hi - lo) - p
        wins += p * neg_below + 0.5 * p * n
        neg_below += n
    return wins / (n_pos * n_neg)


def auc(labels, scores):
    """Area under the ROC curve by the rank (pairwise comparison) method.

    Binary labels take a score vector or an (n x 2) probability matrix.
    Multi-class labels take an (n x k) matrix and return the macro average
    of the one-vs-rest AUCs.
    """
    y = np.asarray(labels).astype(np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim == 2 and s.shape[1] == 1:
        s = s[:, 0]
    if s.ndim == 1:
        if not np.isin(y, (0, 1)).all():
            raise DataError("binary AUC needs labels in {0, 1}")
        return _binary_auc(y, s)
    if s.shape[1] == 2:
        return _binary_auc(y, s[:, 1])
    present = np.unique(y)
    if present.size < 2:
        raise MetricUndefinedError("AUC needs at least two classes present")
    return float(np.mean([_binary_auc((y == k).astype(np.int64), s[:, k]) for k in present]))


def pearson(x, y):
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size or x.size < 2:
        raise DataError("pearson needs two vectors of equal length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.dot(dx, dx))
    sy = np.sqrt(np.dot(dy, dy))
    if sx == 0 or sy == 0:
        raise MetricUndefinedError("correlation with a constant vector is undefined")
    r = float(np.dot(dx, dy) / (sx * sy))
    return min(1.0, max(-1.0, r))


METRICS = {"accuracy": accuracy, "auc": auc}


def permutation_importance(predict, x, y, metric="accuracy", n_repeats=5, seed=0):
    """Score drop when one column at a time is shuffled.

    ``predict`` maps a feature matrix to probabilities (or labels for the
    accuracy metric). Returns ``(mean, variance, drops)`` where ``drops`` is
    (n_features x n_repeats).
    """
    if n_repeats < 2:
        raise DataError("permutation importance needs n_repeats >= 2")
    score_fn = METRICS[metric] if isinstance(metric, str) else metric
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    baseline = score_fn(y, predict(x))
    drops = np.zeros((x.shape[1], n_repeats))
    for j in range(x.shape[1]):
        for r in range(n_repeats):
            shuffled = x.copy()
            shuffled[:, j] = x[rng.permutation(x.shape[0]), j]
            drops[j, r] = baseline - score_fn(y, predict(shuffled))
    return drops.mean(axis=1), drops.var(axis=1), drops


def pfi_variance_summary(variances, reduction="mean"):
    """One scalar from per-feature across-repeat variances (mean or max)."""
    v = np.asarray(variances, dtype=np.float64).ravel()
    if v.size < 1:
        raise DataError("need at least one feature variance")
    if reduction == "mean":
        return float(v.mean())
    if reduction == "max":
        return float(v.max())
    raise DataError(f"unknown reduction {reduction!r}")
