"""Cross-validation index generators and fold aggregation."""
from __future__ import annotations

import math

import numpy as np

from ..errors import SingleCity, TooFewPerClass


def stratified_kfold(labels, k: int = 5, seed: int = 0):
    """Return ``k`` (train_idx, test_idx) pairs.

    Positives and negatives are shuffled separately and dealt round-robin,
    so per-fold class counts differ by at most one.
    """
    y = np.asarray(labels).reshape(-1).astype(np.int64)
    if k < 2:
        raise ValueError("k must be at least 2")
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if pos.size < k or neg.size < k:
        raise TooFewPerClass(f"need >= {k} samples per class, got {pos.size} positive / {neg.size} negative")
    rng = np.random.default_rng(seed)
    fold = np.empty(y.size, dtype=np.int64)
    fold[rng.permutation(pos)] = np.arange(pos.size) % k
    fold[rng.permutation(neg)] = np.arange(neg.size) % k
    out = []
    for f in range(k):
        out.append((np.flatnonzero(fold != f), np.flatnonzero(fold == f)))
    return out


def stratified_holdout(labels, fraction: float, seed: int):
    """Split off a stratified ``fraction`` (at least one per class when possible)."""
    y = np.asarray(labels).reshape(-1).astype(np.int64)
    rng = np.random.default_rng(seed)
    held = []
    for cls in (1, 0):
        idx = rng.permutation(np.flatnonzero(y == cls))
        m = int(round(fraction * idx.size))
        if idx.size >= 2:
            m = min(max(m, 1), idx.size - 1)
        else:
            m = 0
        held.append(idx[:m])
    test = np.sort(np.concatenate(held))
    mask = np.ones(y.size, bool)
    mask[test] = False
    return np.flatnonzero(mask), test


def leave_one_city_out(cities):
    """One (city, train_idx, test_idx) triple per distinct city, sorted by name."""
    c = np.asarray(cities)
    names = sorted(set(c.tolist()))
    if len(names) < 2:
        raise SingleCity(f"leave-one-city-out needs >= 2 cities, got {names}")
    return [(name, np.flatnonzero(c != name), np.flatnonzero(c == name)) for name in names]


def aggregate_folds(reports, keys=None) -> dict:
    """Mean and sample std per metric across fold reports (dicts).

    Returns ``{metric: {"mean", "std", "text"}}`` with text ``"m ± s"``.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise ValueError("aggregation needs at least two reports")
    keys = keys or [k for k in reports[0] if isinstance(reports[0][k], (int, float)) and not isinstance(reports[0][k], bool)]
    out = {}
    for k in keys:
        vals = [float(r[k]) for r in reports]
        # fsum keeps the result independent of fold order
        m = math.fsum(vals) / len(vals)
        s = math.sqrt(math.fsum((v - m) ** 2 for v in vals) / (len(vals) - 1))
        out[k] = {"mean": m, "std": s, "text": f"{m:.3f} ± {s:.3f}"}
    return out
