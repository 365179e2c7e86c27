"""Columnar in-memory sample set and its on-disk store.

On disk a store is a directory with ``manifest.json`` and ``samples.bin``.
``samples.bin`` is a flat array of fixed-size little-endian records::

    sar f32[P*P] | dsm f32[P*P] | mask u8[P*P] | gem f32[G] | label u8 | city u16 | building u32

City and building fields index the string tables kept in the manifest.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ManifestMismatch

SAMPLES = "samples.bin"
MANIFEST = "manifest.json"
FORMAT = "qsbd-samples/1"


def record_dtype(patch_size: int, gem_dim: int) -> np.dtype:
    pp = patch_size * patch_size
    return np.dtype([
        ("sar", "<f4", (pp,)), ("dsm", "<f4", (pp,)), ("mask", "u1", (pp,)),
        ("gem", "<f4", (gem_dim,)), ("label", "u1"), ("city", "<u2"), ("building", "<u4"),
    ], align=False)


@dataclass
class SampleSet:
    """Samples as parallel arrays; row i of every array is one building."""

    sar: np.ndarray          # (N, P, P) float32
    dsm: np.ndarray          # (N, P, P) float32
    mask: np.ndarray         # (N, P, P) uint8
    gem: np.ndarray          # (N, G) float32
    label: np.ndarray        # (N,) uint8
    city: np.ndarray         # (N,) uint16 index into city_names
    building: np.ndarray     # (N,) uint32 index into building_ids
    city_names: list = field(default_factory=list)
    building_ids: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.label)
        for name in ("sar", "dsm", "mask", "gem", "city", "building"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"field {name} has {len(getattr(self, name))} rows, expected {n}")
        if self.mask.size and self.mask.max() > 1:
            raise ValueError("mask values must be 0 or 1")
        if not np.all(np.isfinite(self.gem)):
            raise ValueError("gem features must be finite")

    def __len__(self):
        return len(self.label)

    @property
    def patch_size(self) -> int:
        return self.sar.shape[1]

    @property
    def gem_dim(self) -> int:
        return self.gem.shape[1]

    def cities(self) -> np.ndarray:
        """City name per sample."""
        return np.asarray(self.city_names, dtype=object)[self.city]

    def ids(self) -> np.ndarray:
        return np.asarray(self.building_ids, dtype=object)[self.building]

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        return SampleSet(self.sar[idx], self.dsm[idx], self.mask[idx], self.gem[idx], self.label[idx],
                         self.city[idx], self.building[idx], self.city_names, self.building_ids)

    def counts(self) -> dict:
        out = {}
        for ci, name in enumerate(self.city_names):
            sel = self.city == ci
            dmg = int(self.label[sel].sum())
            out[name] = {"intact": int(sel.sum()) - dmg, "damaged": dmg}
        return out

    def to_records(self) -> np.ndarray:
        n, p = len(self), self.patch_size
        rec = np.zeros(n, dtype=record_dtype(p, self.gem_dim))
        rec["sar"] = self.sar.reshape(n, -1)
        rec["dsm"] = self.dsm.reshape(n, -1)
        rec["mask"] = self.mask.reshape(n, -1)
        rec["gem"] = self.gem
        rec["label"] = self.label
        rec["city"] = self.city
        rec["building"] = self.building
        return rec

    @classmethod
    def from_records(cls, rec: np.ndarray, patch_size: int, city_names, building_ids) -> "SampleSet":
        n, p = len(rec), patch_size
        return cls(
            np.ascontiguousarray(rec["sar"]).reshape(n, p, p).astype(np.float32),
            np.ascontiguousarray(rec["dsm"]).reshape(n, p, p).astype(np.float32),
            np.ascontiguousarray(rec["mask"]).reshape(n, p, p),
            np.ascontiguousarray(rec["gem"]).astype(np.float32),
            np.ascontiguousarray(rec["label"]),
            np.ascontiguousarray(rec["city"]).astype(np.uint16),
            np.ascontiguousarray(rec["building"]).astype(np.uint32),
            list(city_names), list(building_ids),
        )

    def sorted(self) -> "SampleSet":
        """Canonical order: by (city name, building id)."""
        keys = list(zip(self.cities().tolist(), self.ids().tolist()))
        order = sorted(range(len(self)), key=keys.__getitem__)
        return self.subset(np.array(order, dtype=np.int64))


def _atomic_write(path, data: bytes) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def canonicalize(samples: SampleSet) -> SampleSet:
    """Sort by (city, building id) and rebuild minimal sorted string tables.

    The result depends only on the set of samples, not on how it was
    assembled, which keeps store bytes reproducible.
    """
    samples = samples.sorted()
    cities = samples.cities().tolist()
    ids = samples.ids().tolist()
    city_table = sorted(set(cities))
    id_table = sorted(set(ids))
    cidx = {c: i for i, c in enumerate(city_table)}
    bidx = {b: i for i, b in enumerate(id_table)}
    return SampleSet(samples.sar, samples.dsm, samples.mask, samples.gem, samples.label,
                     np.array([cidx[c] for c in cities], dtype=np.uint16),
                     np.array([bidx[b] for b in ids], dtype=np.uint32), city_table, id_table)


def write_store(samples: SampleSet, out_dir, extra: dict | None = None) -> dict:
    """Write the store in canonical order; returns the manifest dict."""
    canon = canonicalize(samples)
    rec = canon.to_records()
    blob = rec.tobytes()
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "format": FORMAT,
        "patch_size": canon.patch_size,
        "G": canon.gem_dim,
        "record_count": len(canon),
        "record_size": rec.dtype.itemsize,
        "samples_sha256": hashlib.sha256(blob).hexdigest(),
        "cities": canon.city_names,
        "building_ids": canon.building_ids,
        "counts": canon.counts(),
    }
    manifest.update(extra or {})
    _atomic_write(os.path.join(out_dir, SAMPLES), blob)
    text = json.dumps(manifest, sort_keys=True, indent=1, ensure_ascii=False) + "\n"
    _atomic_write(os.path.join(out_dir, MANIFEST), text.encode("utf-8"))
    return manifest


def read_manifest(store_dir) -> dict:
    path = os.path.join(store_dir, MANIFEST)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestMismatch(f"{path}: invalid JSON ({exc.msg})") from None


def read_store(store_dir, verify: bool = True):
    """Load ``(SampleSet, manifest)``; raises ManifestMismatch on any inconsistency."""
    man = read_manifest(store_dir)
    if man.get("format") != FORMAT:
        raise ManifestMismatch(f"unknown store format {man.get('format')!r}")
    dt = record_dtype(man["patch_size"], man["G"])
    if dt.itemsize != man["record_size"]:
        raise ManifestMismatch(f"record size {dt.itemsize} does not match manifest {man['record_size']}")
    with open(os.path.join(store_dir, SAMPLES), "rb") as fh:
        blob = fh.read()
    if len(blob) != man["record_count"] * dt.itemsize:
        raise ManifestMismatch(f"samples.bin holds {len(blob)} bytes, manifest implies "
                               f"{man['record_count']} x {dt.itemsize}")
    if verify and hashlib.sha256(blob).hexdigest() != man["samples_sha256"]:
        raise ManifestMismatch("samples.bin hash differs from manifest")
    rec = np.frombuffer(blob, dtype=dt)
    samples = SampleSet.from_records(rec, man["patch_size"], man["cities"], man["building_ids"])
    if samples.counts() != man["counts"]:
        raise ManifestMismatch("per-city counts in manifest differ from stored samples")
    return samples, man


def manifest_hash(store_dir) -> str:
    with open(os.path.join(store_dir, MANIFEST), "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
