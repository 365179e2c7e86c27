"""Fixed-size windows around building centroids."""
from __future__ import annotations

import logging
import math

import numpy as np

from ..geocore import Raster, rasterize_polygon, world_to_pixel

log = logging.getLogger(__name__)

DB_EPS = 1e-6


def patch_origin(r: Raster, centroid, patch_size: int):
    """Top-left (col, row) of the window centered on ``centroid``.

    The centroid's continuous pixel coordinate is rounded half-up; the
    window covers ``[round - size/2, round + size/2 - 1]`` on each axis.
    """
    cx, cy = world_to_pixel(r.transform, centroid[0], centroid[1])
    c = math.floor(cx + 0.5)
    rw = math.floor(cy + 0.5)
    return c - patch_size // 2, rw - patch_size // 2


def extract_patch(r: Raster, centroid, patch_size: int = 32) -> np.ndarray:
    """``patch_size``-square float32 window; outside or nodata cells become 0."""
    if patch_size < 2 or patch_size % 2:
        raise ValueError(f"patch size must be even and >= 2, got {patch_size}")
    c0, r0 = patch_origin(r, centroid, patch_size)
    out = np.zeros((patch_size, patch_size), dtype=np.float32)
    rs, re = max(r0, 0), min(r0 + patch_size, r.height)
    cs, ce = max(c0, 0), min(c0 + patch_size, r.width)
    if rs >= re or cs >= ce:
        log.warning("patch at (%.3f, %.3f) lies fully outside the raster", centroid[0], centroid[1])
        return out
    win = r.values[rs:re, cs:ce]
    if r.nodata is not None:
        win = np.where(win == np.float32(r.nodata), np.float32(0), win)
    out[rs - r0:re - r0, cs - c0:ce - c0] = win
    return out


def footprint_patch(r: Raster, centroid, footprint, patch_size: int = 32) -> np.ndarray:
    """Binary mask of the building on the same window grid as :func:`extract_patch`."""
    c0, r0 = patch_origin(r, centroid, patch_size)
    return rasterize_polygon(footprint, r.transform.shifted(c0, r0), patch_size, patch_size)


def to_db(patch: np.ndarray) -> np.ndarray:
    return (10.0 * np.log10(patch.astype(np.float64) + DB_EPS)).astype(np.float32)


def relative_height(patch: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Subtract the median of valid cells (all cells when ``valid`` is None)."""
    vals = patch if valid is None else patch[valid]
    if vals.size == 0:
        return patch
    return (patch - np.float32(np.median(vals))).astype(np.float32)


def valid_window(r: Raster, centroid, patch_size: int) -> np.ndarray:
    """Which window cells fall inside the raster and are not nodata."""
    c0, r0 = patch_origin(r, centroid, patch_size)
    ok = np.zeros((patch_size, patch_size), dtype=bool)
    rs, re = max(r0, 0), min(r0 + patch_size, r.height)
    cs, ce = max(c0, 0), min(c0 + patch_size, r.width)
    if rs < re and cs < ce:
        ok[rs - r0:re - r0, cs - c0:ce - c0] = r.valid_mask()[rs:re, cs:ce]
    return ok
