"""Multi-label classification metrics: per-class AUC, macro F1 and accuracy."""

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass
class ScoreTable:
    probs: np.ndarray   # [n,C] disease probabilities
    labels: np.ndarray  # [n,C] bits

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.labels = np.asarray(self.labels).astype(bool)
        if self.probs.shape != self.labels.shape or self.probs.ndim != 2:
            raise ValueError(f"probabilities {self.probs.shape} and labels {self.labels.shape} misaligned")
        if np.any((self.probs < 0) | (self.probs > 1)) or not np.all(np.isfinite(self.probs)):
            raise ValueError("probabilities must lie in [0, 1]")

    @property
    def n_classes(self):
        return self.probs.shape[1]


def auc(scores, labels):
    """Mann-Whitney AUC with ties counted half; None when a class is all-positive or all-negative."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)  # average ranks implement the 0.5 tie rule
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def per_class_auc(table):
    return [auc(table.probs[:, c], table.labels[:, c]) for c in range(table.n_classes)]


def mean_auc(table):
    vals = [a for a in per_class_auc(table) if a is not None]
    return float(np.mean(vals)) if vals else None


def _confusion(pred, truth):
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    return tp, fp, fn, tn


def f1_score(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def f1_acc(table, thresholds):
    """Macro F1 and accuracy with a sample positive iff its probability exceeds the class threshold."""
    thr = np.broadcast_to(np.asarray(thresholds, dtype=np.float64), (table.n_classes,))
    if np.any((thr < 0) | (thr > 1)):
        raise ValueError("thresholds must lie in [0, 1]")
    f1s, accs = [], []
    for c in range(table.n_classes):
        tp, fp, fn, tn = _confusion(table.probs[:, c] > thr[c], table.labels[:, c])
        f1s.append(f1_score(tp, fp, fn))
        accs.append((tp + tn) / max(1, tp + fp + fn + tn))
    return float(np.mean(f1s)), float(np.mean(accs))


def choose_thresholds(table):
    """Per-class threshold maximising F1; candidates sit midway between consecutive distinct scores."""
    out = []
    for c in range(table.n_classes):
        s = np.unique(table.probs[:, c])
        cands = np.concatenate([[max(0.0, s[0] - 1e-6)], (s[:-1] + s[1:]) / 2.0]) if len(s) else np.array([0.5])
        best, best_t = -1.0, 0.5
        for t in cands:
            tp, fp, fn, _ = _confusion(table.probs[:, c] > t, table.labels[:, c])
            f = f1_score(tp, fp, fn)
            if f > best:
                best, best_t = f, float(t)
        out.append(best_t)
    return np.array(out)
