"""Threshold-free and threshold-based binary classification metrics.

All metrics treat label 1 (damaged) as the positive class. A sample is
predicted positive iff its score is >= the threshold.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import EmptyConfusion, LengthMismatch, SingleClassEvalSet


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.size} scores but {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    y = y.astype(np.int64)
    npos = int(y.sum())
    if npos == 0 or npos == y.size:
        raise SingleClassEvalSet(f"need both classes, got {npos} positives of {y.size}")
    return s, y


def auroc(scores, labels) -> float:
    """Mann-Whitney AUC with midranks: P(score+ > score-) + 0.5 P(tie)."""
    s, y = _check(scores, labels)
    npos = int(y.sum())
    nneg = y.size - npos
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[y == 1].sum() - npos * (npos + 1) / 2.0
    return float(u / (npos * nneg))


def pr_curve(scores, labels):
    """Counts at each candidate threshold, descending.

    Returns ``(thresholds, tp, fp)`` with thresholds = ``[+inf, distinct
    scores in decreasing order]``; ``tp[i]``/``fp[i]`` count samples with
    score >= thresholds[i].
    """
    s, y = _check(scores, labels)
    order = np.argsort(-s, kind="stable")
    ss, yy = s[order], y[order]
    # last index of each tie group in descending order
    ends = np.flatnonzero(np.r_[ss[1:] != ss[:-1], True])
    ctp = np.cumsum(yy)[ends]
    cfp = (ends + 1) - ctp
    thr = np.r_[np.inf, ss[ends]]
    return thr, np.r_[0, ctp], np.r_[0, cfp]


def pr_best_f1_threshold(scores, labels):
    """Threshold maximizing F1; ties go to the largest threshold.

    Returns ``(threshold, precision, recall, f1)``.
    """
    thr, tp, fp = pr_curve(scores, labels)
    npos = int(tp[-1])
    fn = npos - tp
    den = 2 * tp + fp + fn
    f1 = np.where(den > 0, 2 * tp / np.maximum(den, 1), 0.0)
    best = int(np.argmax(f1))  # first max = largest threshold
    t, b_tp, b_fp = thr[best], int(tp[best]), int(fp[best])
    prec = b_tp / (b_tp + b_fp) if b_tp + b_fp else 0.0
    rec = b_tp / npos
    return float(t), float(prec), float(rec), float(f1[best])


def confusion(scores, labels, threshold: float):
    """(TP, FP, FN, TN) for the rule score >= threshold."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(np.int64)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.size} scores but {y.size} labels")
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    return tp, fp, fn, tn


def cohen_kappa(tp, fp, fn, tn) -> float:
    counts = (tp, fp, fn, tn)
    if any(c < 0 for c in counts):
        raise ValueError("confusion counts must be non-negative")
    n = float(sum(counts))
    if n == 0:
        raise EmptyConfusion("confusion matrix is empty")
    p_o = (tp + tn) / n
    p_e = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def precision_recall_f1(tp, fp, fn):
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f1


@dataclass
class EvalReport:
    threshold: float
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    kappa: float
    auroc: float
    n: int

    def to_dict(self) -> dict:
        d = asdict(self)
        if not np.isfinite(d["threshold"]):
            d["threshold"] = None
        return d


METRIC_KEYS = ("precision", "recall", "f1", "kappa", "auroc")


def evaluate(scores, labels, threshold: float | None = None) -> EvalReport:
    """Full report; threshold defaults to the best-F1 point of the PR curve."""
    if threshold is None:
        threshold = pr_best_f1_threshold(scores, labels)[0]
    tp, fp, fn, tn = confusion(scores, labels, threshold)
    prec, rec, _ = precision_recall_f1(tp, fp, fn)
    den = 2 * tp + fp + fn
    f1 = 2 * tp / den if den else 0.0
    return EvalReport(float(threshold), tp, fp, fn, tn, prec, rec, f1,
                      cohen_kappa(tp, fp, fn, tn), auroc(scores, labels), tp + fp + fn + tn)
