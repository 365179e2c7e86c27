"""GeoJSON polygon subset and CSV exposure tables."""
from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from ..errors import InvalidPolygon, ParseError, UnsupportedGeometry
from .geometry import Polygon, PointRecord


def _polygon_from_coords(rings, path, index) -> Polygon:
    if not isinstance(rings, list) or not rings:
        raise ParseError(f"feature {index}: polygon needs at least one ring", path)
    try:
        return Polygon(rings[0], rings[1:])
    except InvalidPolygon as exc:
        raise ParseError(f"feature {index}: {exc}", path) from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"feature {index}: bad coordinates ({exc})", path) from None


def read_feature_collection(path):
    """Return ``[(Polygon, properties), ...]`` in file order.

    MultiPolygon features are split into one entry per part; every part
    gets the same properties dict (a shallow copy each).
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ParseError("top-level object must be a FeatureCollection", path)
    features = doc.get("features")
    if not isinstance(features, list):
        raise ParseError("FeatureCollection.features must be a list", path)

    out = []
    for i, feat in enumerate(features):
        if not isinstance(feat, dict) or feat.get("type") != "Feature":
            raise ParseError(f"feature {i} is not a Feature object", path)
        props = feat.get("properties") or {}
        if not isinstance(props, dict):
            raise ParseError(f"feature {i}: properties must be an object", path)
        if not isinstance(props.get("id"), str):
            raise ParseError(f"feature {i}: required string property 'id' missing", path)
        geom = feat.get("geometry")
        if not isinstance(geom, dict):
            raise ParseError(f"feature {i}: missing geometry", path)
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            out.append((_polygon_from_coords(coords, path, i), dict(props)))
        elif gtype == "MultiPolygon":
            if not isinstance(coords, list) or not coords:
                raise ParseError(f"feature {i}: empty MultiPolygon", path)
            for part in coords:
                out.append((_polygon_from_coords(part, path, i), dict(props)))
        else:
            raise UnsupportedGeometry(f"feature {i}: geometry type {gtype!r} not supported", path)
    return out


def feature_collection(items) -> dict:
    """Build a FeatureCollection dict from ``(Polygon, properties)`` pairs."""
    return {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "properties": dict(props),
             "geometry": {"type": "Polygon", "coordinates": poly.to_coords()}}
            for poly, props in items
        ],
    }


def write_feature_collection(items, path) -> None:
    text = json.dumps(feature_collection(items), separators=(",", ":"))
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)


def read_point_table(path):
    """Parse the exposure CSV; returns ``(column_names, [PointRecord, ...])``.

    The first two columns must be ``x`` and ``y``; the remaining columns
    define the attribute vector, in header order.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, header row required", path, 1) from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "x" or header[1] != "y":
            raise ParseError("header must start with columns 'x,y'", path, 1)
        if len(set(header)) != len(header):
            raise ParseError("duplicate column names in header", path, 1)
        names = header[2:]
        records = []
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", path, lineno)
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ParseError("non-numeric field", path, lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite field", path, lineno)
            records.append(PointRecord(vals[0], vals[1], tuple(vals[2:])))
    return names, records


def write_point_table(names, records, path) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", *names])
        for r in records:
            w.writerow([repr(float(r.x)), repr(float(r.y)), *(repr(float(v)) for v in r.attributes)])
    os.replace(tmp, path)


def point_array(records) -> np.ndarray:
    return np.array([(r.x, r.y) for r in records], dtype=np.float64).reshape(-1, 2)
