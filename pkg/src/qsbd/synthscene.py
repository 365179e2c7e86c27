"""Synthetic earthquake scenes in the same file formats as real inputs.

A city is a street grid of rectangular buildings. Each modality carries a
damage cue whose strength is set independently:

* SAR (``s_sar``): intact buildings show a bright double-bounce stripe on the
  west (sensor-facing) edge, layover further west and a shadow to the east.
  Damage fades those structures, darkens the roof and adds multiplicative
  texture. Intensity speckle is Gamma(L, 1/L); rasters store amplitude.
* DSM (``s_dsm``): damaged buildings lose height and gain rubble noise.
* exposure (``s_gem``): damage is drawn with odds tilted by a per-cell latent
  vulnerability that also shapes the cell's decade and typology mix.

With every strength at zero, damaged and intact buildings are statistically
identical in every file.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, PlacementOverflow
from .geocore import (GeoTransform, PointRecord, Polygon, Raster, write_ascii_grid, write_feature_collection,
                      write_point_table)

BORDER = 80.0         # free margin around the built-up area (m)
MIN_SIZE, MAX_SIZE = 10.0, 20.0   # building side lengths (m)
LOT_JITTER = 4.0      # max offset of a building from its lot center (m)
BG_SIGMA = 0.1        # background mean intensity
ROOF_SIGMA = 0.25
STRIPE_SIGMA = 1.0
LAYOVER_SIGMA = 0.4
SHADOW_SIGMA = 0.01
GEM_COLUMNS = ["dec_1960s", "dec_1970s", "dec_1980s", "dec_1990s",
               "rc_frame", "masonry", "replacement_cost", "occupancy"]
SCENE_FILES = ("sar.asc", "dsm.asc", "footprints.geojson", "destroyed.geojson", "gem.csv", "truth.json")


@dataclass(frozen=True)
class SceneConfig:
    city: str = "city"
    n_buildings: int = 200
    damage_rate: float = 0.05
    n_damaged: int | None = None      # exact count; overrides damage_rate
    extent: float | None = None       # square side (m); sized automatically when None
    sar_pixel: float = 2.5
    dsm_pixel: float = 5.0
    s_sar: float = 0.5
    s_dsm: float = 0.0
    s_gem: float = 0.0
    looks: float = 4.0
    seed: int = 0
    origin: tuple = (500000.0, 4100000.0)
    gem_cell: float = 250.0
    lot: float = 80.0                 # street-grid spacing (m)

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if self.n_buildings < 1:
            raise ConfigError("n_buildings must be >= 1")
        if self.n_damaged is None and not 0 < self.damage_rate < 1:
            raise ConfigError(f"damage_rate must lie in (0, 1), got {self.damage_rate}")
        if self.n_damaged is not None and not 0 <= self.n_damaged <= self.n_buildings:
            raise ConfigError(f"n_damaged must lie in [0, n_buildings], got {self.n_damaged}")
        if self.extent is not None and self.extent <= 2 * BORDER:
            raise ConfigError(f"extent must exceed {2 * BORDER} m")
        for name in ("s_sar", "s_dsm", "s_gem"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.sar_pixel <= 0 or self.dsm_pixel <= 0 or self.gem_cell <= 0 or self.looks <= 0:
            raise ConfigError("pixel sizes, gem_cell and looks must be positive")
        if self.lot < MAX_SIZE + 2 * LOT_JITTER + 2.0:
            raise ConfigError(f"lot must be at least {MAX_SIZE + 2 * LOT_JITTER + 2.0} m")

    @property
    def damaged_count(self) -> int:
        if self.n_damaged is not None:
            return self.n_damaged
        return int(round(self.damage_rate * self.n_buildings))

    def side(self) -> float:
        if self.extent is not None:
            return float(self.extent)
        lots = math.ceil(math.sqrt(self.n_buildings / 0.75))
        raw = lots * self.lot + 2 * BORDER
        step = _lcm_step(self.sar_pixel, self.dsm_pixel)
        return math.ceil(raw / step) * step


def _lcm_step(a: float, b: float) -> float:
    # smallest common multiple on a 1 cm grid, so both rasters tile the extent
    ia, ib = round(a * 100), round(b * 100)
    return ia * ib // math.gcd(ia, ib) / 100.0


@dataclass
class Layout:
    """Building geometry and hidden state, shared by every renderer."""
    x0: np.ndarray
    y0: np.ndarray
    x1: np.ndarray
    y1: np.ndarray
    height: np.ndarray
    label: np.ndarray
    cell: np.ndarray
    decade: list
    ids: list
    side: float
    origin: tuple
    cells: dict = field(default_factory=dict)   # latent v, attributes, centers

    def __len__(self):
        return len(self.ids)


def _streams(seed: int):
    names = ("place", "gem", "damage", "sar", "dsm", "destroyed")
    seqs = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(s) for n, s in zip(names, seqs)}


def _gem_cells(cfg: SceneConfig, side: float, rng):
    n = max(1, math.ceil(side / cfg.gem_cell))
    ox, oy = cfg.origin
    cx = ox + (np.arange(n) + 0.5) * side / n
    cy = oy + (np.arange(n) + 0.5) * side / n
    gx, gy = np.meshgrid(cx, cy, indexing="xy")
    m = n * n
    v = rng.normal(size=m)
    logits = np.stack([1.0 * v, 0.4 * v, -0.4 * v, -1.0 * v], axis=1) + rng.normal(0, 0.3, size=(m, 4))
    dec = np.exp(logits - logits.max(axis=1, keepdims=True))
    dec /= dec.sum(axis=1, keepdims=True)
    masonry = 1.0 / (1.0 + np.exp(-(0.8 * v + rng.normal(0, 0.3, size=m))))
    rc = 0.9 / (1.0 + np.exp(-(-0.8 * v + rng.normal(0, 0.3, size=m))))
    cost = 400.0 * np.exp(-0.25 * v + rng.normal(0, 0.1, size=m))
    occ = np.round(np.exp(rng.normal(3.0, 0.4, size=m)))
    attrs = np.column_stack([dec, rc, masonry, cost, occ])
    return {"n": n, "x": gx.ravel(), "y": gy.ravel(), "v": v, "attrs": attrs}


def layout_city(cfg: SceneConfig) -> Layout:
    """Place buildings, pick the damaged ones, and draw the exposure cells."""
    st = _streams(cfg.seed)
    side = cfg.side()
    lot = cfg.lot
    lots = int((side - 2 * BORDER) // lot)
    if lots < 1 or lots * lots < cfg.n_buildings:
        raise PlacementOverflow(f"{cfg.n_buildings} buildings do not fit on a {side:g} m extent "
                                f"({max(lots, 0) ** 2} lots)")
    rng = st["place"]
    chosen = np.sort(rng.choice(lots * lots, size=cfg.n_buildings, replace=False))
    li, lj = chosen // lots, chosen % lots
    w = rng.uniform(MIN_SIZE, MAX_SIZE, size=cfg.n_buildings)
    d = rng.uniform(MIN_SIZE, MAX_SIZE, size=cfg.n_buildings)
    # buildings sit near their lot center; wide lots keep neighbours out of
    # each other's SAR patch
    fx = 0.5 * (lot - w) + rng.uniform(-LOT_JITTER, LOT_JITTER, size=cfg.n_buildings)
    fy = 0.5 * (lot - d) + rng.uniform(-LOT_JITTER, LOT_JITTER, size=cfg.n_buildings)
    ox, oy = cfg.origin
    x0 = np.round(ox + BORDER + lj * lot + fx, 2)
    y0 = np.round(oy + BORDER + li * lot + fy, 2)
    x1 = np.round(x0 + w, 2)
    y1 = np.round(y0 + d, 2)
    height = np.clip(rng.normal(15.0, 5.0, size=cfg.n_buildings), 3.0, 30.0)

    cells = _gem_cells(cfg, side, st["gem"])
    n = cells["n"]
    ci = np.clip(((0.5 * (y0 + y1) - oy) / (side / n)).astype(int), 0, n - 1)
    cj = np.clip(((0.5 * (x0 + x1) - ox) / (side / n)).astype(int), 0, n - 1)
    cell = ci * n + cj
    dec_p = cells["attrs"][cell, :4]
    u = st["gem"].random(cfg.n_buildings)
    decade = [GEM_COLUMNS[k][4:] for k in (dec_p.cumsum(axis=1) < u[:, None]).sum(axis=1).clip(0, 3)]

    # weighted sampling without replacement (Efraimidis-Spirakis keys)
    k = cfg.damaged_count
    weight = np.exp(3.0 * cfg.s_gem * cells["v"][cell])
    keys = np.log(st["damage"].random(cfg.n_buildings)) / weight
    label = np.zeros(cfg.n_buildings, dtype=np.int64)
    if k:
        label[np.argsort(-keys, kind="stable")[:k]] = 1
    ids = [f"{cfg.city}-{i:05d}" for i in range(cfg.n_buildings)]
    return Layout(x0, y0, x1, y1, height, label, cell, decade, ids, side, cfg.origin, cells)


def _pix_range(a0, a1, origin, px, n, flip=False):
    """Pixel indices whose centers fall in [a0, a1) along one axis."""
    if flip:  # rows count downward from the top edge
        lo = math.ceil((origin - a1) / px - 0.5)
        hi = math.ceil((origin - a0) / px - 0.5)
    else:
        lo = math.ceil((a0 - origin) / px - 0.5)
        hi = math.ceil((a1 - origin) / px - 0.5)
    return max(lo, 0), min(hi, n)


def render_sar_sigma(cfg: SceneConfig, lay: Layout, rng=None):
    """Mean-intensity map (before speckle) and a background mask."""
    rng = rng if rng is not None else _streams(cfg.seed)["sar"]
    px = cfg.sar_pixel
    n = int(round(lay.side / px))
    left, top = lay.origin[0], lay.origin[1] + lay.side
    sigma = np.full((n, n), BG_SIGMA, dtype=np.float64)
    bg = np.ones((n, n), dtype=bool)
    s = cfg.s_sar
    m = len(lay)
    roof = ROOF_SIGMA * np.exp(rng.normal(0, 0.25, size=m))
    stripe = STRIPE_SIGMA * np.exp(rng.normal(0, 0.3, size=m))
    tex_seed = rng.integers(1 << 62, size=m)
    for b in range(m):
        dmg = lay.label[b] == 1
        f = (1.0 - s) if dmg else 1.0
        h = lay.height[b]
        r0, r1 = _pix_range(lay.y0[b], lay.y1[b], top, px, n, flip=True)
        # layover toward the sensor (west), shadow away from it (east)
        c0, c1 = _pix_range(lay.x0[b] - 0.3 * h * f, lay.x0[b], left, px, n)
        sigma[r0:r1, c0:c1] = np.maximum(sigma[r0:r1, c0:c1], LAYOVER_SIGMA)
        bg[r0:r1, c0:c1] = False
        c0, c1 = _pix_range(lay.x1[b], lay.x1[b] + 0.5 * h * f, left, px, n)
        sigma[r0:r1, c0:c1] = SHADOW_SIGMA
        bg[r0:r1, c0:c1] = False
        c0, c1 = _pix_range(lay.x0[b], lay.x1[b], left, px, n)
        rs = roof[b]
        if dmg and s > 0:
            shape = 1.0 / (1.5 * s)  # texture variance 1.5 * s, mean 1
            tex = np.random.default_rng(tex_seed[b]).gamma(shape, 1.0 / shape, size=(r1 - r0, c1 - c0))
            sigma[r0:r1, c0:c1] = rs * (1.0 - 0.5 * s) * tex
        else:
            sigma[r0:r1, c0:c1] = rs
        bg[r0:r1, c0:c1] = False
        if c1 > c0:
            sigma[r0:r1, c0] = rs + (stripe[b] - rs) * f
    return sigma, bg


def speckle(sigma: np.ndarray, looks: float, rng) -> np.ndarray:
    """Amplitude image: sqrt(sigma * Gamma(L, 1/L))."""
    return np.sqrt(sigma * rng.gamma(looks, 1.0 / looks, size=sigma.shape))


def _coverage_1d(a0, a1, origin, px, n, flip=False):
    """Fractional overlap of [a0, a1) with each pixel along an axis."""
    if flip:
        a0, a1 = origin - a1, origin - a0
    else:
        a0, a1 = a0 - origin, a1 - origin
    lo = max(int(math.floor(a0 / px)), 0)
    hi = min(int(math.ceil(a1 / px)), n)
    if hi <= lo:
        return lo, np.zeros(0)
    edges = np.arange(lo, hi + 1) * px
    cov = np.clip(np.minimum(edges[1:], a1) - np.maximum(edges[:-1], a0), 0, None) / px
    return lo, cov


def render_dsm(cfg: SceneConfig, lay: Layout, rng=None) -> np.ndarray:
    rng = rng if rng is not None else _streams(cfg.seed)["dsm"]
    px = cfg.dsm_pixel
    n = int(round(lay.side / px))
    left, top = lay.origin[0], lay.origin[1] + lay.side
    xs = (np.arange(n) + 0.5) * px
    ys = (np.arange(n) + 0.5) * px
    gx, gy = np.meshgrid(xs, ys)
    terrain = 300.0 + 0.01 * gx - 0.005 * gy
    for _ in range(3):
        kx, ky = rng.uniform(0.5, 2.0, size=2) * 2 * math.pi / max(lay.side, 1.0)
        terrain += rng.uniform(2.0, 6.0) * np.sin(kx * gx + ky * gy + rng.uniform(0, 2 * math.pi))
    dsm = terrain
    s = cfg.s_dsm
    m = len(lay)
    drop = rng.uniform(0.85, 1.0, size=m)
    for b in range(m):
        c0, cx = _coverage_1d(lay.x0[b], lay.x1[b], left, px, n)
        r0, cy = _coverage_1d(lay.y0[b], lay.y1[b], top, px, n, flip=True)
        cov = np.outer(cy, cx)
        h = lay.height[b]
        if lay.label[b] == 1 and s > 0:
            h = h * (1.0 - s * drop[b])
            rubble = rng.normal(0.0, 2.0 * s, size=cov.shape)
            dsm[r0:r0 + cov.shape[0], c0:c0 + cov.shape[1]] += cov * (h + rubble)
        else:
            dsm[r0:r0 + cov.shape[0], c0:c0 + cov.shape[1]] += cov * h
    return dsm + rng.normal(0.0, 0.5, size=dsm.shape)


def _footprint(lay: Layout, b: int, dx: float = 0.0, dy: float = 0.0) -> Polygon:
    return Polygon.box(lay.x0[b] + dx, lay.y0[b] + dy, lay.x1[b] + dx, lay.y1[b] + dy)


def generate_city(cfg: SceneConfig, out_dir) -> dict:
    """Write the six scene files for one city; returns the truth dict."""
    st = _streams(cfg.seed)
    lay = layout_city(cfg)
    os.makedirs(out_dir, exist_ok=True)

    sigma, _ = render_sar_sigma(cfg, lay, st["sar"])
    amp = speckle(sigma, cfg.looks, st["sar"])
    sar_t = GeoTransform(lay.origin[0], lay.origin[1] + lay.side, cfg.sar_pixel, cfg.sar_pixel)
    write_ascii_grid(Raster(amp.astype(np.float32), sar_t), os.path.join(out_dir, "sar.asc"))
    dsm_t = GeoTransform(lay.origin[0], lay.origin[1] + lay.side, cfg.dsm_pixel, cfg.dsm_pixel)
    write_ascii_grid(Raster(render_dsm(cfg, lay, st["dsm"]).astype(np.float32), dsm_t),
                     os.path.join(out_dir, "dsm.asc"))

    feats = [(_footprint(lay, b), {"id": lay.ids[b]}) for b in range(len(lay))]
    write_feature_collection(feats, os.path.join(out_dir, "footprints.geojson"))
    jr = st["destroyed"]
    destroyed = []
    for b in np.flatnonzero(lay.label == 1):
        # offset of length <= 1 m, far below what could flip the overlap rule
        ang = jr.uniform(0, 2 * math.pi)
        rad = jr.uniform(0, 1.0)
        destroyed.append((_footprint(lay, b, rad * math.cos(ang), rad * math.sin(ang)),
                          {"id": f"destroyed-{lay.ids[b]}"}))
    write_feature_collection(destroyed, os.path.join(out_dir, "destroyed.geojson"))

    cells = lay.cells
    table = [PointRecord(float(x), float(y), tuple(float(a) for a in row))
             for x, y, row in zip(cells["x"], cells["y"], cells["attrs"])]
    write_point_table(GEM_COLUMNS, table, os.path.join(out_dir, "gem.csv"))

    truth = {
        "city": cfg.city,
        "config": _config_dict(cfg),
        "buildings": [
            {"id": lay.ids[b], "label": int(lay.label[b]), "height": float(lay.height[b]),
             "decade": lay.decade[b], "cell": int(lay.cell[b])}
            for b in range(len(lay))
        ],
    }
    _write_json(os.path.join(out_dir, "truth.json"), truth)
    return truth


def _config_dict(cfg: SceneConfig) -> dict:
    d = asdict(cfg)
    d["origin"] = list(cfg.origin)
    return d


def _write_json(path, obj) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, ensure_ascii=False)
        fh.write("\n")
    os.replace(tmp, path)


def city_seed(campaign_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(campaign_seed), int(index)]).generate_state(1)[0])


def generate_campaign(configs, out_dir, seed: int = 0) -> dict:
    """One subdirectory per city plus ``campaign.json``.

    Each city's ``seed`` field is replaced by a stream derived from
    ``(seed, index)``, so a city's files do not depend on its siblings.
    """
    configs = list(configs)
    if len(configs) < 2:
        raise ConfigError("a campaign needs at least two cities")
    names = [c.city for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate city names: {names}")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, c in enumerate(configs):
        c = replace(c, seed=city_seed(seed, i))
        generate_city(c, os.path.join(out_dir, c.city))
        entries.append(_config_dict(c))
    manifest = {"seed": int(seed), "cities": entries}
    _write_json(os.path.join(out_dir, "campaign.json"), manifest)
    return manifest


def regenerate_campaign(campaign_json, out_dir) -> dict:
    """Rebuild a campaign tree from its ``campaign.json``."""
    with open(campaign_json, "r", encoding="utf-8") as fh:
        man = json.load(fh)
    os.makedirs(out_dir, exist_ok=True)
    for entry in man["cities"]:
        generate_city(SceneConfig(**entry), os.path.join(out_dir, entry["city"]))
    _write_json(os.path.join(out_dir, "campaign.json"), man)
    return man


# intact / damaged building counts of the five reference cities
TABLE_CITIES = (
    ("islahiye", 3825, 192),
    ("kahramanmaras", 4641, 233),
    ("nurdagi", 3289, 498),
    ("osmaniye", 317, 16),
    ("turkoglu", 453, 23),
)


def table_configs(**overrides):
    """SceneConfigs reproducing the five cities' intact/damaged counts."""
    return [SceneConfig(city=name, n_buildings=intact + dmg, n_damaged=dmg, **overrides)
            for name, intact, dmg in TABLE_CITIES]


def small_configs(n_cities: int = 2, n_buildings: int = 50, damage_rate: float = 0.1, **overrides):
    return [SceneConfig(city=f"city{i}", n_buildings=n_buildings, damage_rate=damage_rate, **overrides)
            for i in range(n_cities)]
