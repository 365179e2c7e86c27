"""Single-band rasters and the ESRI ASCII grid format."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DimensionMismatch, ParseError
from .geometry import GeoTransform

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter",
                "cellsize", "nodata_value")


@dataclass
class Raster:
    """Georeferenced grid; ``values`` is (height, width) float32, row 0 = north."""

    values: np.ndarray
    transform: GeoTransform
    nodata: Optional[float] = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError(f"raster values must be 2-D, got shape {self.values.shape}")
        valid = self.valid_mask()
        if not np.all(np.isfinite(self.values[valid])):
            raise ValueError("raster holds non-finite values outside nodata")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def valid_mask(self) -> np.ndarray:
        if self.nodata is None:
            return np.ones(self.values.shape, dtype=bool)
        return self.values != np.float32(self.nodata)


def read_ascii_grid(path) -> Raster:
    """Parse an ESRI ASCII grid. Header keys are case-insensitive.

    Raises:
        ParseError: malformed header or non-numeric cell, with line number.
        DimensionMismatch: cell count differs from ncols * nrows.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    header = {}
    lineno = 0
    while lineno < len(lines):
        parts = lines[lineno].split()
        if not parts:
            lineno += 1
            continue
        key = parts[0].lower()
        if key not in _HEADER_KEYS:
            break
        if len(parts) != 2:
            raise ParseError(f"header line for {parts[0]!r} needs exactly one value", path, lineno + 1)
        if key in header:
            raise ParseError(f"duplicate header key {parts[0]!r}", path, lineno + 1)
        try:
            header[key] = (float(parts[1]), lineno + 1)
        except ValueError:
            raise ParseError(f"non-numeric header value {parts[1]!r}", path, lineno + 1) from None
        lineno += 1

    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise ParseError(f"missing header key {key!r}", path, lineno + 1)
    ncols, nrows = header["ncols"][0], header["nrows"][0]
    if ncols != int(ncols) or nrows != int(nrows) or ncols < 1 or nrows < 1:
        raise ParseError("ncols/nrows must be positive integers", path, header["ncols"][1])
    ncols, nrows = int(ncols), int(nrows)
    cell = header["cellsize"][0]
    if not cell > 0:
        raise ParseError("cellsize must be positive", path, header["cellsize"][1])
    if "xllcorner" in header and "yllcorner" in header:
        xll, yll = header["xllcorner"][0], header["yllcorner"][0]
    elif "xllcenter" in header and "yllcenter" in header:
        xll, yll = header["xllcenter"][0] - cell / 2, header["yllcenter"][0] - cell / 2
    else:
        raise ParseError("missing xllcorner/yllcorner (or xllcenter/yllcenter)", path, lineno + 1)
    nodata = header["nodata_value"][0] if "nodata_value" in header else None

    rows = []
    for i in range(lineno, len(lines)):
        text = lines[i]
        if not text.strip():
            continue
        try:
            rows.append(np.array(text.split(), dtype=np.float64))
        except ValueError:
            bad = next(tok for tok in text.split() if not _is_float(tok))
            raise ParseError(f"non-numeric cell value {bad!r}", path, i + 1) from None
    flat = np.concatenate(rows) if rows else np.empty(0)
    if flat.size != ncols * nrows:
        raise DimensionMismatch(f"expected {ncols}x{nrows}={ncols * nrows} cells, found {flat.size}", path)
    values = flat.astype(np.float32).reshape(nrows, ncols)
    transform = GeoTransform(xll, yll + nrows * cell, cell, cell)
    try:
        return Raster(values, transform, nodata)
    except ValueError as exc:
        raise ParseError(str(exc), path) from None


def _is_float(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def write_ascii_grid(r: Raster, path) -> None:
    """Write ``r`` with 9 significant digits, which round-trips every float32."""
    t = r.transform
    if t.pixel_w != t.pixel_h:
        raise ValueError("ASCII grid requires square pixels")
    lines = [
        f"ncols {r.width}",
        f"nrows {r.height}",
        f"xllcorner {t.origin_x!r}",
        f"yllcorner {t.origin_y - r.height * t.pixel_h!r}",
        f"cellsize {t.pixel_w!r}",
    ]
    if r.nodata is not None:
        lines.append(f"NODATA_value {float(np.float32(r.nodata))!r}")
    body = "\n".join(" ".join(f"{v:.9g}" for v in row) for row in r.values.tolist())
    _atomic_write_text(path, "\n".join(lines) + "\n" + body + "\n")


def _atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
