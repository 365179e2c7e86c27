"""Central finite-difference verification of analytic gradients (float64).

Piecewise-linear ops (relu) make the finite difference meaningless when
the perturbation moves an activation across zero. Every relu reports its
sign mask through ``functional.relu_observers``; a coordinate whose +h or
-h evaluation changes any mask is skipped and counted, never silently
compared.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F


@dataclass
class GradReport:
    rel_err: dict = field(default_factory=dict)   # tensor name -> relative error
    checked: int = 0
    skipped: int = 0

    @property
    def max_rel_err(self) -> float:
        return max(self.rel_err.values(), default=0.0)


def _eval(fn):
    masks = []
    F.relu_observers.append(masks.append)
    try:
        val = float(fn().data)
    finally:
        F.relu_observers.pop()
    return val, masks


def _same(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """``|a - n| / max(|a|, |n|, floor)`` over whole vectors (Euclidean norms)."""
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(num / den)


def gradcheck(fn, tensors, names=None, h: float = 1e-6, max_coords: int | None = None,
              rng: np.random.Generator | None = None, floor: float = 1e-8) -> GradReport:
    """Compare backprop gradients of scalar ``fn()`` against central differences.

    Args:
        fn: zero-argument callable returning a scalar Tensor; it must be a
            deterministic function of the tensors' current data.
        tensors: float64 tensors (requires_grad=True) to differentiate.
        names: labels for the report; defaults to ``t0, t1, ...``.
        max_coords: if set, check only a random subset of this many
            coordinates per tensor.
    """
    tensors = list(tensors)
    names = list(names) if names is not None else [f"t{i}" for i in range(len(tensors))]
    rng = rng if rng is not None else np.random.default_rng(0)
    for t in tensors:
        if t.data.dtype != np.float64:
            raise TypeError("gradcheck needs float64 tensors")
        t.grad = None
    out = fn()
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    _, base_masks = _eval(fn)

    rep = GradReport()
    for t, name, ga in zip(tensors, names, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        a_vals, n_vals = [], []
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp, mp = _eval(fn)
            flat[i] = orig - h
            fm, mm = _eval(fn)
            flat[i] = orig
            if not (_same(mp, base_masks) and _same(mm, base_masks)):
                rep.skipped += 1
                continue
            a_vals.append(ga.reshape(-1)[i])
            n_vals.append((fp - fm) / (2 * h))
        rep.checked += len(a_vals)
        if a_vals:
            rep.rel_err[name] = relative_error(np.array(a_vals), np.array(n_vals), floor)
    for t in tensors:
        t.grad = None
    return rep
