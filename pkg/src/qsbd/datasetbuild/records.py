"""Building records: labeling, exposure join, negative sampling, GEM scaling."""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from ..geocore import Polygon, nearest_points, polygon_centroid, polygon_intersection_area

log = logging.getLogger(__name__)

OVERLAP_RATIO = 0.5


@dataclass(frozen=True)
class BuildingRecord:
    id: str
    footprint: Polygon
    centroid: tuple
    city: str
    label: int = 0
    gem_vector: tuple = ()


def records_from_features(features, city: str):
    """Turn ``(Polygon, props)`` pairs into records.

    Parts sharing an id (a split MultiPolygon) get a ``#k`` suffix so that
    building ids stay unique.
    """
    counts = {}
    for _, props in features:
        counts[props["id"]] = counts.get(props["id"], 0) + 1
    seen = {}
    out = []
    for poly, props in features:
        bid = props["id"]
        if counts[bid] > 1:
            k = seen.get(bid, 0)
            seen[bid] = k + 1
            bid = f"{bid}#{k}"
        out.append(BuildingRecord(bid, poly, polygon_centroid(poly), city))
    return out


def overlap_ratio(a: Polygon, b: Polygon) -> float:
    inter = polygon_intersection_area(a, b)
    return inter / min(a.area, b.area)


def label_buildings(records, destroyed, ratio: float = OVERLAP_RATIO):
    """Label 1 iff some destroyed polygon covers >= ``ratio`` of the smaller area."""
    destroyed = list(destroyed)
    if not destroyed:
        return [replace(r, label=0) for r in records]
    db = np.array([d.bounds for d in destroyed])
    out = []
    for r in records:
        xmin, ymin, xmax, ymax = r.footprint.bounds
        cand = np.flatnonzero((db[:, 0] < xmax) & (db[:, 2] > xmin) & (db[:, 1] < ymax) & (db[:, 3] > ymin))
        lab = 0
        for j in cand:
            if overlap_ratio(r.footprint, destroyed[j]) >= ratio:
                lab = 1
                break
        out.append(replace(r, label=lab))
    return out


def join_gem(records, table):
    """Attach the attribute vector of the nearest exposure point to each record."""
    q = np.array([r.centroid for r in records], dtype=np.float64).reshape(-1, 2)
    idx = nearest_points(q, table)
    return [replace(r, gem_vector=tuple(table[j].attributes)) for r, j in zip(records, idx)]


def city_stream(seed: int, city: str) -> np.random.Generator:
    # keyed on the city name so one city's draw never depends on the others
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(city.encode("utf-8"))]))


def sample_negatives(records, ratio: int = 20, seed: int = 0):
    """Keep every damaged record plus min(ratio * P, N) random intact ones per city.

    Output is sorted by (city, id).
    """
    if ratio < 1:
        raise ValueError(f"sampling ratio must be >= 1, got {ratio}")
    by_city = {}
    for r in records:
        by_city.setdefault(r.city, []).append(r)
    out = []
    for city in sorted(by_city):
        recs = sorted(by_city[city], key=lambda r: r.id)
        pos = [r for r in recs if r.label == 1]
        neg = [r for r in recs if r.label == 0]
        if not pos:
            log.warning("city %s has no damaged buildings; it contributes no samples", city)
            continue
        m = min(ratio * len(pos), len(neg))
        pick = city_stream(seed, city).choice(len(neg), size=m, replace=False)
        chosen = pos + [neg[i] for i in np.sort(pick)]
        out.extend(sorted(chosen, key=lambda r: r.id))
    return out


@dataclass
class GemStats:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray = field(default=None)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.constant is None:
            self.constant = self.std < 1e-12
        self.constant = np.asarray(self.constant, dtype=bool)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        safe = np.where(self.constant, 1.0, self.std)
        z = (x - self.mean) / safe
        return np.where(self.constant, 0.0, z)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GemStats":
        return cls(np.array(d["mean"]), np.array(d["std"]), np.array(d["constant"], dtype=bool))


def gem_stats(x, rows=None) -> GemStats:
    """Population mean/std per column, over ``rows`` only when given."""
    x = np.asarray(x, dtype=np.float64)
    if rows is not None:
        x = x[rows]
    if x.shape[0] < 2:
        raise ValueError("GEM normalization needs at least two records")
    return GemStats(x.mean(axis=0), x.std(axis=0))


def normalize_gem(x, rows=None):
    """Z-score columns with statistics from ``rows``; returns (normalized, stats)."""
    st = gem_stats(x, rows)
    return st.apply(x), st
