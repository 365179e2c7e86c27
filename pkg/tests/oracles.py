"""Independent reference implementations shared by unit and acceptance tests.

Each oracle is written for clarity rather than speed and shares no code
with the package.
"""
import math
from fractions import Fraction

import numpy as np

from qsbd.errors import InvalidPolygon
from qsbd.geocore import Polygon


# ---------------------------------------------------------------- geometry

def pnpoly(px, py, rings):
    """Plain even-odd crossing test, one point at a time."""
    inside = False
    for ring in rings:
        n = len(ring) - 1
        for i in range(n):
            xi, yi = ring[i]
            xj, yj = ring[i + 1]
            if (yi > py) != (yj > py) and px < (xj - xi) * (py - yi) / (yj - yi) + xi:
                inside = not inside
    return inside


def brute_mask(poly, t, w, h):
    out = np.zeros((h, w), dtype=np.uint8)
    rings = [r.tolist() for r in poly.rings]
    for r in range(h):
        for c in range(w):
            x = t.origin_x + (c + 0.5) * t.pixel_w
            y = t.origin_y - (r + 0.5) * t.pixel_h
            out[r, c] = pnpoly(x, y, rings)
    return out


def random_convex(rng, cx, cy, rmax):
    angles = np.sort(rng.uniform(0, 2 * np.pi, rng.integers(3, 12)))
    radius = rng.uniform(0.3, 1.0) * rmax
    pts = [(cx + radius * math.cos(a), cy + radius * math.sin(a)) for a in angles]
    return Polygon(pts + [pts[0]])


def random_star(rng, cx, cy, rmax):
    # radial stars with an angular gap > pi can self-intersect; redraw those
    while True:
        n = int(rng.integers(5, 14))
        angles = np.sort(rng.uniform(0, 2 * np.pi, n))
        radii = rng.uniform(0.3, 1.0, n) * rmax
        pts = [(cx + r * math.cos(a), cy + r * math.sin(a)) for a, r in zip(angles, radii)]
        try:
            return Polygon(pts + [pts[0]])
        except InvalidPolygon:
            continue


def rect_overlap(r1, r2):
    w = max(0.0, min(r1[2], r2[2]) - max(r1[0], r2[0]))
    h = max(0.0, min(r1[3], r2[3]) - max(r1[1], r2[1]))
    return w * h


def rect_overlap_ratio(a, b):
    """Intersection over the smaller area, for (x0, y0, x1, y1) rectangles."""
    amin = min((a[2] - a[0]) * (a[3] - a[1]), (b[2] - b[0]) * (b[3] - b[1]))
    return rect_overlap(a, b) / amin


# ---------------------------------------------------------------- metrics

def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    credit = 0.0
    for p in pos:
        for q in neg:
            credit += 1.0 if p > q else 0.5 if p == q else 0.0
    return credit / (len(pos) * len(neg))


def exhaustive_f1_scan(scores, labels):
    """Exact F1 at every candidate threshold (distinct scores, +inf, -inf)."""
    cands = sorted(set(scores) | {math.inf, -math.inf}, reverse=True)
    best = None
    for t in cands:
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 0)
        fn = sum(1 for s, y in zip(scores, labels) if s < t and y == 1)
        f1 = Fraction(2 * tp, 2 * tp + fp + fn) if 2 * tp + fp + fn else Fraction(0)
        # strict improvement keeps the larger threshold on ties
        if best is None or f1 > best[3]:
            prec = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
            best = (t, prec, Fraction(tp, tp + fn), f1)
    return best


def kappa_direct(tp, fp, fn, tn):
    n = tp + fp + fn + tn
    po = (tp + tn) / n
    pe = ((tp + fp) / n) * ((tp + fn) / n) + ((fn + tn) / n) * ((fp + tn) / n)
    return (po - pe) / (1 - pe)


def random_set(rng, n=None, ties=False):
    n = n or int(rng.integers(2, 60))
    y = rng.integers(0, 2, size=n)
    y[0], y[1] = 0, 1
    s = rng.integers(0, 8, size=n) / 8.0 if ties else rng.random(n)
    return s, y
