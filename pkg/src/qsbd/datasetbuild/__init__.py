"""Scene inputs to labeled, sampled, serialized patch datasets."""
from .build import BuildConfig, Scene, build_dataset, extract_samples, load_scene
from .patches import extract_patch, footprint_patch, patch_origin, relative_height, to_db
from .records import (BuildingRecord, GemStats, gem_stats, join_gem, label_buildings, normalize_gem,
                      overlap_ratio, records_from_features, sample_negatives)
from .store import SampleSet, canonicalize, manifest_hash, read_manifest, read_store, write_store

__all__ = [
    "BuildConfig", "BuildingRecord", "GemStats", "SampleSet", "Scene", "build_dataset", "canonicalize", "extract_patch",
    "extract_samples", "footprint_patch", "gem_stats", "join_gem", "label_buildings", "load_scene",
    "manifest_hash", "normalize_gem", "overlap_ratio", "patch_origin", "read_manifest", "read_store",
    "records_from_features", "relative_height", "sample_negatives", "to_db", "write_store",
]
