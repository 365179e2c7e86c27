"""Planar geometry: transforms, polygons, rasterization, overlap and lookup.

All geometry math runs in float64. Coordinates are shifted to a local
origin before any shoelace sum, since map coordinates (UTM-sized, ~1e6 m)
would otherwise lose most of their precision in the cross products.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DegeneratePolygon, EmptyTable, InvalidPolygon

AREA_EPS = 1e-12


@dataclass(frozen=True)
class GeoTransform:
    """North-up affine transform. ``pixel_h`` is positive; rows go south."""

    origin_x: float
    origin_y: float
    pixel_w: float
    pixel_h: float

    def __post_init__(self):
        if not (self.pixel_w > 0 and self.pixel_h > 0):
            raise ValueError(f"pixel sizes must be positive, got {self.pixel_w}, {self.pixel_h}")

    def shifted(self, col_off: int, row_off: int) -> "GeoTransform":
        """Transform of a window whose top-left pixel is (col_off, row_off)."""
        return GeoTransform(self.origin_x + col_off * self.pixel_w,
                            self.origin_y - row_off * self.pixel_h,
                            self.pixel_w, self.pixel_h)


def world_to_pixel(t: GeoTransform, x, y):
    """Continuous pixel coordinates; pixel (c, r) spans [c, c+1) x [r, r+1)."""
    return (x - t.origin_x) / t.pixel_w, (t.origin_y - y) / t.pixel_h


def pixel_to_world(t: GeoTransform, col, row):
    return t.origin_x + col * t.pixel_w, t.origin_y - row * t.pixel_h


def pixel_centers(t: GeoTransform, width: int, height: int):
    """1-D arrays of pixel-center x (per column) and y (per row)."""
    xs = t.origin_x + (np.arange(width) + 0.5) * t.pixel_w
    ys = t.origin_y - (np.arange(height) + 0.5) * t.pixel_h
    return xs, ys


# --------------------------------------------------------------------------
# polygons

def _ring_signed_area(ring: np.ndarray) -> float:
    x = ring[:, 0] - ring[0, 0]
    y = ring[:, 1] - ring[0, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def _segments_cross(p1, p2, q1, q2) -> np.ndarray:
    """Vectorized closed-segment intersection test of p1p2 against many q1q2."""
    def orient(a, b, c):
        return np.sign((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                       - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))

    def on_seg(a, b, c):
        return ((np.minimum(a[..., 0], b[..., 0]) <= c[..., 0]) & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0]))
                & (np.minimum(a[..., 1], b[..., 1]) <= c[..., 1]) & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1])))

    p1 = np.broadcast_to(p1, q1.shape)
    p2 = np.broadcast_to(p2, q1.shape)
    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    hit = (o1 != o2) & (o3 != o4)
    hit |= (o1 == 0) & on_seg(p1, p2, q1)
    hit |= (o2 == 0) & on_seg(p1, p2, q2)
    hit |= (o3 == 0) & on_seg(q1, q2, p1)
    hit |= (o4 == 0) & on_seg(q1, q2, p2)
    return hit


def ring_is_simple(ring: np.ndarray) -> bool:
    """True when no two non-adjacent edges of a closed ring touch."""
    pts = ring - ring[0]
    n = len(pts) - 1
    if n < 3:
        return False
    a, b = pts[:-1], pts[1:]
    for i in range(n - 2):
        js = np.arange(i + 2, n)
        if i == 0:
            js = js[js != n - 1]
        if js.size and _segments_cross(a[i], b[i], a[js], b[js]).any():
            return False
    return True


def _as_ring(coords) -> np.ndarray:
    ring = np.asarray(coords, dtype=np.float64)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise InvalidPolygon(f"ring must be a sequence of (x, y) pairs, got shape {ring.shape}")
    if len(ring) < 4:
        raise InvalidPolygon(f"ring needs at least 4 vertices, got {len(ring)}")
    if not np.array_equal(ring[0], ring[-1]):
        raise InvalidPolygon("ring is not closed (first vertex != last vertex)")
    if not np.all(np.isfinite(ring)):
        raise InvalidPolygon("ring has non-finite coordinates")
    return ring


class Polygon:
    """Exterior ring plus holes, each closed (first vertex repeated last).

    Rings are stored oriented: exterior counter-clockwise, holes clockwise,
    so the interior is always on the left of every edge.
    """

    __slots__ = ("exterior", "holes")

    def __init__(self, exterior, holes: Sequence = (), validate: bool = True):
        ext = _as_ring(exterior)
        hs = [_as_ring(h) for h in holes]
        if validate and not ring_is_simple(ext):
            raise InvalidPolygon("exterior ring self-intersects")
        if _ring_signed_area(ext) < 0:
            ext = ext[::-1].copy()
        hs = [h[::-1].copy() if _ring_signed_area(h) > 0 else h for h in hs]
        ext.setflags(write=False)
        for h in hs:
            h.setflags(write=False)
        self.exterior = ext
        self.holes = tuple(hs)

    def __repr__(self):
        return f"Polygon({len(self.exterior) - 1} vertices, {len(self.holes)} holes, area={self.area:.6g})"

    @property
    def rings(self):
        return (self.exterior,) + self.holes

    @property
    def area(self) -> float:
        return polygon_area(self)

    @property
    def bounds(self):
        e = self.exterior
        return float(e[:, 0].min()), float(e[:, 1].min()), float(e[:, 0].max()), float(e[:, 1].max())

    def translated(self, dx: float, dy: float) -> "Polygon":
        d = np.array([dx, dy])
        return Polygon(self.exterior + d, [h + d for h in self.holes], validate=False)

    def to_coords(self):
        return [r.tolist() for r in self.rings]

    @classmethod
    def box(cls, xmin, ymin, xmax, ymax) -> "Polygon":
        return cls([(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax), (xmin, ymin)], validate=False)


def polygon_area(p: Polygon) -> float:
    return abs(_ring_signed_area(p.exterior)) - sum(abs(_ring_signed_area(h)) for h in p.holes)


def polygon_centroid(p: Polygon):
    """Area-weighted centroid; holes contribute negative area.

    Ring orientation is normalized at construction (exterior CCW, holes CW),
    so plain signed shoelace sums over all rings subtract the holes.
    """
    ox, oy = p.exterior[0]
    a_tot = cx = cy = 0.0
    for ring in p.rings:
        x = ring[:, 0] - ox
        y = ring[:, 1] - oy
        cross = x[:-1] * y[1:] - x[1:] * y[:-1]
        a_tot += 0.5 * cross.sum()
        cx += np.sum((x[:-1] + x[1:]) * cross) / 6.0
        cy += np.sum((y[:-1] + y[1:]) * cross) / 6.0
    if abs(a_tot) < AREA_EPS:
        raise DegeneratePolygon(f"polygon area {a_tot:.3g} below {AREA_EPS}")
    return float(cx / a_tot + ox), float(cy / a_tot + oy)


def points_in_polygon(xs, ys, p: Polygon) -> np.ndarray:
    """Even-odd containment of many points (crossing-number test over all rings)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = np.zeros(np.broadcast(xs, ys).shape, dtype=bool)
    for ring in p.rings:
        for (xi, yi), (xj, yj) in zip(ring[:-1], ring[1:]):
            if yi == yj:
                continue
            crosses = (yi > ys) != (yj > ys)
            x_int = (xj - xi) * (ys - yi) / (yj - yi) + xi
            inside ^= crosses & (xs < x_int)
    return inside


def rasterize_polygon(p: Polygon, t: GeoTransform, width: int, height: int) -> np.ndarray:
    """Binary mask (uint8, height x width) of pixel centers inside ``p``.

    Scanline fill: for every row center the ring crossings are collected,
    sorted, and each pixel counts the crossings strictly to its right.
    """
    mask = np.zeros((height, width), dtype=np.uint8)
    xmin, ymin, xmax, ymax = p.bounds
    xs, ys = pixel_centers(t, width, height)
    # crossing rule is half-open in y: a row exactly at ymin can be inside
    rows = np.nonzero((ys >= ymin) & (ys < ymax))[0]
    if rows.size == 0 or xs.size == 0 or xs[-1] < xmin or xs[0] >= xmax:
        return mask
    edges = [(ring[:-1], ring[1:]) for ring in p.rings]
    a = np.concatenate([e[0] for e in edges])
    b = np.concatenate([e[1] for e in edges])
    keep = a[:, 1] != b[:, 1]
    xi, yi, xj, yj = a[keep, 0], a[keep, 1], b[keep, 0], b[keep, 1]
    for r in rows:
        y = ys[r]
        hit = (yi > y) != (yj > y)
        if not hit.any():
            continue
        x_int = np.sort((xj[hit] - xi[hit]) * (y - yi[hit]) / (yj[hit] - yi[hit]) + xi[hit])
        n_right = x_int.size - np.searchsorted(x_int, xs, side="right")
        mask[r] = n_right & 1
    return mask


# --------------------------------------------------------------------------
# intersection area

def _edges(p: Polygon, origin):
    a = np.concatenate([r[:-1] for r in p.rings]) - origin
    b = np.concatenate([r[1:] for r in p.rings]) - origin
    return a, b


def _boundary_inside_sum(a0, b0, oa, ob, rings_other, tol, keep_shared: bool) -> float:
    """Shoelace sum over the parts of edges a0->b0 lying inside the other polygon.

    Each edge is split at every crossing with the other polygon's edges; a
    sub-segment counts when its midpoint is strictly inside (even-odd), or
    when it runs along the other boundary in the same direction and
    ``keep_shared`` is set (so shared boundary is counted exactly once).
    """
    total = 0.0
    da = ob - oa
    len_o2 = np.einsum("ij,ij->i", da, da)
    for p, q in zip(a0, b0):
        d = q - p
        denom = d[0] * da[:, 1] - d[1] * da[:, 0]
        w = oa - p
        cross_wd = w[:, 0] * d[1] - w[:, 1] * d[0]
        ts = [0.0, 1.0]
        par = np.abs(denom) <= 1e-12 * (np.hypot(*d) * np.sqrt(len_o2))
        if (~par).any():
            nd = denom[~par]
            t = (w[~par, 0] * da[~par, 1] - w[~par, 1] * da[~par, 0]) / nd
            u = cross_wd[~par] / nd
            ok = (u >= -tol) & (u <= 1 + tol) & (t > 0) & (t < 1)
            ts.extend(t[ok].tolist())
        col = par & (np.abs(cross_wd) <= tol * np.hypot(*d))
        if col.any():
            dd = float(d @ d)
            for endpoint in (oa[col], ob[col]):
                t = (endpoint - p) @ d / dd
                ts.extend(t[(t > 0) & (t < 1)].tolist())
        ts = np.unique(np.array(ts))
        for t0, t1 in zip(ts[:-1], ts[1:]):
            if t1 - t0 <= 1e-15:
                continue
            s0 = p + t0 * d
            s1 = p + t1 * d
            m = 0.5 * (s0 + s1)
            # on the other boundary?
            rel = m - oa
            cr = rel[:, 0] * da[:, 1] - rel[:, 1] * da[:, 0]
            proj = np.einsum("ij,ij->i", rel, da)
            on = (np.abs(cr) <= tol * np.sqrt(len_o2)) & (proj >= 0) & (proj <= len_o2)
            if on.any():
                if keep_shared and np.any(da[on] @ d > 0):
                    total += s0[0] * s1[1] - s1[0] * s0[1]
                continue
            inside = False
            for ring in rings_other:
                xi, yi = ring[:-1, 0], ring[:-1, 1]
                xj, yj = ring[1:, 0], ring[1:, 1]
                hit = (yi > m[1]) != (yj > m[1])
                if hit.any():
                    x_int = (xj[hit] - xi[hit]) * (m[1] - yi[hit]) / (yj[hit] - yi[hit]) + xi[hit]
                    inside ^= bool(np.count_nonzero(m[0] < x_int) & 1)
            if inside:
                total += s0[0] * s1[1] - s1[0] * s0[1]
    return 0.5 * total


def polygon_intersection_area(a: Polygon, b: Polygon) -> float:
    """Area of a ∩ b via Green's theorem over the intersection boundary.

    The boundary of a ∩ b is the part of ∂a inside b, the part of ∂b inside
    a, and shared boundary where both interiors lie on the same side.
    """
    for p in (a, b):
        if abs(polygon_area(p)) < AREA_EPS:
            raise DegeneratePolygon("polygon area below 1e-12")
    ax0, ay0, ax1, ay1 = a.bounds
    bx0, by0, bx1, by1 = b.bounds
    if ax0 >= bx1 or bx0 >= ax1 or ay0 >= by1 or by0 >= ay1:
        return 0.0
    # canonical argument order makes the result bit-symmetric
    if (a.exterior.tobytes(), len(a.holes)) > (b.exterior.tobytes(), len(b.holes)):
        a, b = b, a
    origin = a.exterior[0].copy()
    scale = max(ax1 - ax0, ay1 - ay0, bx1 - bx0, by1 - by0, 1.0)
    tol = 1e-12 * scale
    a0, a1 = _edges(a, origin)
    b0, b1 = _edges(b, origin)
    rings_a = [r - origin for r in a.rings]
    rings_b = [r - origin for r in b.rings]
    area = (_boundary_inside_sum(a0, a1, b0, b1, rings_b, tol, keep_shared=True)
            + _boundary_inside_sum(b0, b1, a0, a1, rings_a, tol, keep_shared=False))
    if area < AREA_EPS:
        return 0.0
    return float(area)


# --------------------------------------------------------------------------
# point tables

@dataclass(frozen=True)
class PointRecord:
    x: float
    y: float
    attributes: tuple


def nearest_point(query, table) -> int:
    """Index of the table point closest to ``query``; lowest index wins ties."""
    return int(nearest_points(np.asarray([query], dtype=np.float64), table)[0])


def nearest_points(queries: np.ndarray, table, chunk: int = 4096) -> np.ndarray:
    """Vectorized nearest lookup for an (n, 2) array of query points."""
    if len(table) == 0:
        raise EmptyTable("point table is empty")
    if isinstance(table, np.ndarray):
        pts = np.asarray(table, dtype=np.float64)
    else:
        pts = np.array([(r.x, r.y) for r in table], dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 2)
    out = np.empty(len(queries), dtype=np.int64)
    for s in range(0, len(queries), chunk):
        q = queries[s:s + chunk]
        d2 = (q[:, None, 0] - pts[None, :, 0]) ** 2 + (q[:, None, 1] - pts[None, :, 1]) ** 2
        out[s:s + chunk] = np.argmin(d2, axis=1)  # argmin returns the first minimum
    return out
