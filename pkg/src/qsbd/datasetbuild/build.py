"""End-to-end dataset construction from scene directories."""
from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, ParseError
from ..geocore import read_ascii_grid, read_feature_collection, read_point_table
from .patches import extract_patch, footprint_patch, relative_height, to_db, valid_window
from .records import gem_stats, join_gem, label_buildings, records_from_features, sample_negatives
from .store import SampleSet, canonicalize, write_store

log = logging.getLogger(__name__)

SCENE_FILES = ("sar.asc", "dsm.asc", "footprints.geojson", "destroyed.geojson", "gem.csv")


@dataclass(frozen=True)
class BuildConfig:
    patch_size: int = 32
    ratio: int = 20
    seed: int = 0
    sar_db: bool = False
    dsm_relative: bool = True
    overlap: float = 0.5

    def __post_init__(self):
        if self.patch_size < 2 or self.patch_size % 2:
            raise ConfigError(f"patch_size must be even and >= 2, got {self.patch_size}")
        if self.ratio < 1:
            raise ConfigError(f"ratio must be >= 1, got {self.ratio}")
        if not 0 < self.overlap <= 1:
            raise ConfigError(f"overlap must lie in (0, 1], got {self.overlap}")


@dataclass
class Scene:
    city: str
    sar: object
    dsm: object
    records: list
    gem_columns: list


def load_scene(scene_dir, labeled: bool = True, overlap: float = 0.5) -> Scene:
    """Read one city directory; records come back labeled and GEM-joined."""
    city = os.path.basename(os.path.normpath(scene_dir))
    sar = read_ascii_grid(os.path.join(scene_dir, "sar.asc"))
    dsm = read_ascii_grid(os.path.join(scene_dir, "dsm.asc"))
    feats = read_feature_collection(os.path.join(scene_dir, "footprints.geojson"))
    records = records_from_features(feats, city)
    if labeled:
        destroyed = [p for p, _ in read_feature_collection(os.path.join(scene_dir, "destroyed.geojson"))]
        if not destroyed:
            log.warning("%s: destroyed layer is empty, every building is labeled intact", city)
        records = label_buildings(records, destroyed, overlap)
    names, table = read_point_table(os.path.join(scene_dir, "gem.csv"))
    records = join_gem(records, table)
    return Scene(city, sar, dsm, records, names)


def extract_samples(scenes, selected, cfg: BuildConfig, gem_values) -> SampleSet:
    """Patches for ``selected`` records (looked up by city in ``scenes``)."""
    by_city = {s.city: s for s in scenes}
    n, p = len(selected), cfg.patch_size
    sar = np.zeros((n, p, p), np.float32)
    dsm = np.zeros((n, p, p), np.float32)
    mask = np.zeros((n, p, p), np.uint8)
    for i, r in enumerate(selected):
        sc = by_city[r.city]
        sp = extract_patch(sc.sar, r.centroid, p)
        sar[i] = to_db(sp) if cfg.sar_db else sp
        mask[i] = footprint_patch(sc.sar, r.centroid, r.footprint, p)
        dp = extract_patch(sc.dsm, r.centroid, p)
        if cfg.dsm_relative:
            dp = relative_height(dp, valid_window(sc.dsm, r.centroid, p))
        dsm[i] = dp
    city_names = sorted({r.city for r in selected})
    cidx = {c: i for i, c in enumerate(city_names)}
    ids = [r.id for r in selected]
    return SampleSet(
        sar, dsm, mask, np.asarray(gem_values, np.float32).reshape(n, -1),
        np.array([r.label for r in selected], np.uint8),
        np.array([cidx[r.city] for r in selected], np.uint16),
        np.arange(n, dtype=np.uint32), city_names, ids,
    )


def _check_columns(scenes):
    cols = scenes[0].gem_columns
    for s in scenes[1:]:
        if s.gem_columns != cols:
            raise ParseError(f"{s.city}: gem.csv columns {s.gem_columns} differ from {cols}")
    return cols


def build_dataset(scene_dirs, out_dir, cfg: BuildConfig = BuildConfig()):
    """Label, sample, extract and store; returns ``(SampleSet, manifest)``."""
    scene_dirs = sorted(scene_dirs, key=lambda d: os.path.basename(os.path.normpath(d)))
    scenes = [load_scene(d, True, cfg.overlap) for d in scene_dirs]
    names = [s.city for s in scenes]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate city directory names: {names}")
    cols = _check_columns(scenes)
    all_records = [r for s in scenes for r in s.records]
    selected = sample_negatives(all_records, cfg.ratio, cfg.seed)
    input_counts = {}
    for s in scenes:
        dmg = sum(r.label for r in s.records)
        input_counts[s.city] = {"intact": len(s.records) - dmg, "damaged": dmg}
    raw = np.array([r.gem_vector for r in selected], dtype=np.float64).reshape(len(selected), len(cols))
    if len(selected) >= 2:
        stats = gem_stats(raw)
        gem = stats.apply(raw)
        norm = stats.to_dict()
        flagged = [c for c, k in zip(cols, stats.constant) if k]
        if flagged:
            log.warning("constant GEM features mapped to 0: %s", flagged)
    else:
        gem, norm = np.zeros_like(raw), None
    samples = canonicalize(extract_samples(scenes, selected, cfg, gem))
    extra = {
        "sampling_seed": cfg.seed,
        "sampling_ratio": cfg.ratio,
        "gem_columns": cols,
        "gem_norm": norm,
        "input_counts": input_counts,
        "build_config": asdict(cfg),
    }
    manifest = write_store(samples, out_dir, extra)
    return samples, manifest
