"""Command line front end: ``qsbd <subcommand> [flags]``.

Results go to files only; logs go to standard error. On failure a single
JSON object ``{"error", "message", "exit_code"}`` is printed to standard
error and the process exits with the error's code (1 parse, 2 config,
3 runtime, 4 numeric divergence).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import synthscene
from .datasetbuild import BuildConfig, build_dataset, extract_samples, load_scene, read_store
from .datasetbuild.records import GemStats
from .datasetbuild.store import manifest_hash
from .errors import ConfigError, QsbdError
from .evaluation import evaluate as evaluate_scores
from .evaluation import protocol
from .fusion import FusionConfig
from .geocore import write_feature_collection
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.resnet import profile
from .training import TrainConfig, model_from_checkpoint, predict, train

log = logging.getLogger("qsbd")

# every default in one place; ``--config`` files use the same keys
DEFAULTS = {
    # synth-gen
    "cities": 2, "buildings": 1050, "damage_rate": 0.05, "table": False,
    "s_sar": 0.5, "s_dsm": 0.0, "s_gem": 0.0, "looks": 4.0, "lot": 80.0,
    # build-dataset
    "ratio": 20, "patch_size": 32, "sar_db": False, "dsm_relative": True, "overlap": 0.5,
    # model and training
    "modalities": "sar,ftp,dsm,gem", "profile": "compact", "gem_hidden": "64,64", "head_hidden": 256,
    "dropout": 0.5, "epochs": 50, "lr": 1e-4, "batch": 64, "pos_weight": None, "patience": 10,
    "val_fraction": 0.15, "normalization": "global",
    # protocols
    "k": 5, "jobs": 1, "threshold": None,
    "seed": 0,
}


def _hash_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _hash_inputs(paths) -> dict:
    """sha256 per input file; directories are expanded one level."""
    out = {}
    for p in paths:
        if os.path.isdir(p):
            for name in sorted(os.listdir(p)):
                f = os.path.join(p, name)
                if os.path.isfile(f) and ".tmp" not in name:
                    out[os.path.normpath(f)] = _hash_file(f)
        elif os.path.isfile(p):
            out[os.path.normpath(p)] = _hash_file(p)
    return out


def _write_run(path, args, inputs) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config", "verbose", "command")}
    run = {"subcommand": args.command, "config": cfg, "inputs": _hash_inputs(inputs)}
    protocol.atomic_write_text(path, protocol.canonical_dumps(run))


def _run_path(out) -> str:
    """``run.json`` inside directory outputs, ``<file>.run.json`` beside file outputs."""
    return os.path.join(out, "run.json") if os.path.isdir(out) else f"{out}.run.json"


def _ints(text) -> tuple:
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def fusion_config(args, gem_dim: int) -> FusionConfig:
    return FusionConfig(modalities=args.modalities, encoder=profile(args.profile), gem_dim=gem_dim,
                        gem_hidden=_ints(args.gem_hidden), head_hidden=int(args.head_hidden),
                        dropout=float(args.dropout))


def train_config(args) -> TrainConfig:
    return TrainConfig(batch_size=int(args.batch), epochs=int(args.epochs), lr=float(args.lr),
                       patience=int(args.patience), seed=int(args.seed),
                       pos_weight=None if args.pos_weight is None else float(args.pos_weight),
                       val_fraction=float(args.val_fraction), normalization=args.normalization)


def _scene_dirs(paths):
    """Accept city directories or a campaign root holding them."""
    out = []
    for p in paths:
        if os.path.isfile(os.path.join(p, "sar.asc")):
            out.append(p)
            continue
        subs = sorted(os.path.join(p, d) for d in os.listdir(p)
                      if os.path.isfile(os.path.join(p, d, "sar.asc")))
        if not subs:
            raise FileNotFoundError(f"{p}: no scene directories found")
        out.extend(subs)
    return out


# ---------------------------------------------------------------- commands

def cmd_synth_gen(args) -> None:
    common = dict(s_sar=args.s_sar, s_dsm=args.s_dsm, s_gem=args.s_gem, looks=args.looks, lot=args.lot)
    if args.table:
        configs = synthscene.table_configs(**common)
    else:
        configs = synthscene.small_configs(args.cities, args.buildings, args.damage_rate, **common)
    synthscene.generate_campaign(configs, args.out, seed=args.seed)
    _write_run(os.path.join(args.out, "run.json"), args, [])


def cmd_build_dataset(args) -> None:
    dirs = _scene_dirs(args.scenes)
    cfg = BuildConfig(patch_size=args.patch_size, ratio=args.ratio, seed=args.seed, sar_db=args.sar_db,
                      dsm_relative=args.dsm_relative, overlap=args.overlap)
    _, man = build_dataset(dirs, args.out, cfg)
    _write_run(os.path.join(args.out, "run.json"), args, dirs)
    log.info("wrote %d samples to %s", man["record_count"], args.out)


def _dataset_meta(store_dir, man) -> dict:
    return {"manifest_sha256": manifest_hash(store_dir), "gem_norm": man.get("gem_norm"),
            "gem_columns": man.get("gem_columns"), "build_config": man.get("build_config")}


def cmd_train(args) -> None:
    samples, man = read_store(args.dataset)
    res = train(samples, np.arange(len(samples)), fusion_config(args, samples.gem_dim), train_config(args))
    ckpt = res.checkpoint()
    ckpt.meta["dataset"] = _dataset_meta(args.dataset, man)
    save_checkpoint(args.out, ckpt)
    _write_run(_run_path(args.out), args, [args.dataset])
    log.info("best epoch %d, validation F1 %.4f", res.stats.best_epoch, res.stats.best_f1)


def cmd_evaluate(args) -> None:
    samples, man = read_store(args.dataset)
    ckpt = load_checkpoint(args.checkpoint)
    model, norm = model_from_checkpoint(ckpt)
    if "gem" in model.cfg.modalities and model.cfg.gem_dim != samples.gem_dim:
        raise ConfigError(f"checkpoint expects {model.cfg.gem_dim} GEM features, dataset has {samples.gem_dim}")
    idx = np.arange(len(samples))
    scores = predict(model, norm, samples, idx)
    rep = evaluate_scores(scores, samples.label, args.threshold).to_dict()
    rep_t = evaluate_scores(scores, samples.label, ckpt.meta["stats"]["val_threshold"]).to_dict()
    res = protocol.SplitResult("all", np.zeros(0, np.int64), idx, scores, rep, rep_t,
                               ckpt.meta["epoch"], ckpt.meta["loss_history"])
    report = protocol.build_report("evaluate", [res], {"checkpoint": ckpt.config, "threshold": args.threshold},
                                   manifest_hash(args.dataset))
    os.makedirs(args.out, exist_ok=True)
    protocol.write_outputs(args.out, report, res.predictions(samples))
    _write_run(os.path.join(args.out, "run.json"), args, [args.dataset, args.checkpoint])


def _protocol_command(args, kind: str) -> None:
    samples, _ = read_store(args.dataset)
    fusion, tcfg = fusion_config(args, samples.gem_dim), train_config(args)
    if kind == "cross-validate":
        results = protocol.cross_validate(samples, fusion, tcfg, k=args.k, seed=args.seed, jobs=args.jobs)
        extra = {"k": args.k, "split_seed": args.seed}
    else:
        results = protocol.loco(samples, fusion, tcfg, jobs=args.jobs)
        extra = {}
    report = protocol.build_report(kind, results, protocol.config_echo(fusion, tcfg, **extra),
                                   manifest_hash(args.dataset))
    records = [p for r in results for p in r.predictions(samples)]
    os.makedirs(args.out, exist_ok=True)
    protocol.write_outputs(args.out, report, records)
    _write_run(os.path.join(args.out, "run.json"), args, [args.dataset])
    sys.stderr.write(protocol.format_table(report))


def cmd_cross_validate(args) -> None:
    _protocol_command(args, "cross-validate")


def cmd_loco(args) -> None:
    _protocol_command(args, "loco")


def cmd_predict(args) -> None:
    ckpt = load_checkpoint(args.checkpoint)
    model, norm = model_from_checkpoint(ckpt)
    ds = ckpt.meta.get("dataset") or {}
    bcfg = BuildConfig(**ds["build_config"]) if ds.get("build_config") else BuildConfig()
    scene = load_scene(args.scene, labeled=False)
    if ds.get("gem_columns") and scene.gem_columns != ds["gem_columns"]:
        raise ConfigError(f"gem.csv columns {scene.gem_columns} differ from the training set {ds['gem_columns']}")
    raw = np.array([r.gem_vector for r in scene.records], dtype=np.float64).reshape(len(scene.records), -1)
    gem = GemStats.from_dict(ds["gem_norm"]).apply(raw) if ds.get("gem_norm") else raw
    samples = extract_samples([scene], scene.records, bcfg, gem)
    if "gem" in model.cfg.modalities and model.cfg.gem_dim != samples.gem_dim:
        raise ConfigError(f"checkpoint expects {model.cfg.gem_dim} GEM features, scene has {samples.gem_dim}")
    scores = predict(model, norm, samples)
    t = ckpt.meta["stats"]["val_threshold"] if args.threshold is None else args.threshold
    feats = [(r.footprint, {"id": r.id, "damage_prob": float(s), "damaged": bool(s >= t)})
             for r, s in zip(scene.records, scores)]
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    write_feature_collection(feats, args.out)
    _write_run(_run_path(args.out), args, [args.scene, args.checkpoint])


# ---------------------------------------------------------------- parser

def _model_flags(p) -> None:
    p.add_argument("--dataset", required=True, help="sample store directory")
    p.add_argument("--modalities", help="comma list from sar,ftp,dsm,gem (sar and ftp required)")
    p.add_argument("--profile", choices=["compact", "full"])
    p.add_argument("--gem-hidden", help="GEM MLP widths, e.g. 64,64")
    p.add_argument("--head-hidden", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--pos-weight", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--normalization", choices=["global", "patch", "none"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsbd", description="Building damage detection from SAR patches.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file whose keys override flags")
        p.add_argument("--seed", type=int)
        return p

    p = add("synth-gen", cmd_synth_gen, "generate a synthetic multi-city campaign")
    p.add_argument("--out", required=True)
    p.add_argument("--cities", type=int)
    p.add_argument("--buildings", type=int, help="buildings per city")
    p.add_argument("--damage-rate", type=float)
    p.add_argument("--table", action="store_true", default=None, help="five cities with the reference building counts")
    p.add_argument("--s-sar", type=float)
    p.add_argument("--s-dsm", type=float)
    p.add_argument("--s-gem", type=float)
    p.add_argument("--looks", type=float)
    p.add_argument("--lot", type=float, help="street-grid spacing in metres")

    p = add("build-dataset", cmd_build_dataset, "label, sample and extract patches")
    p.add_argument("--scenes", nargs="+", required=True, help="city directories or a campaign root")
    p.add_argument("--out", required=True)
    p.add_argument("--ratio", type=int, help="intact buildings kept per damaged one")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--sar-db", action="store_true", default=None)
    p.add_argument("--no-dsm-relative", dest="dsm_relative", action="store_false", default=None)
    p.add_argument("--overlap", type=float)

    p = add("train", cmd_train, "train one model on a whole dataset")
    _model_flags(p)
    p.add_argument("--out", required=True, help="checkpoint path")

    p = add("evaluate", cmd_evaluate, "score a dataset with a checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, help="fixed threshold (default: best F1)")
    p.add_argument("--out", required=True)

    for name, func, help_ in (("cross-validate", cmd_cross_validate, "stratified k-fold cross-validation"),
                              ("loco", cmd_loco, "leave-one-city-out evaluation")):
        p = add(name, func, help_)
        _model_flags(p)
        if name == "cross-validate":
            p.add_argument("--k", type=int)
        p.add_argument("--jobs", type=int, help="parallel splits (1 keeps runs reproducible)")
        p.add_argument("--out", required=True)

    p = add("predict", cmd_predict, "per-building damage probabilities as GeoJSON")
    p.add_argument("--scene", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, help="default: the checkpoint's validation threshold")
    p.add_argument("--out", required=True)
    return ap


def resolve(args) -> argparse.Namespace:
    """Fill unset flags from DEFAULTS, then apply ``--config`` on top."""
    for k, v in DEFAULTS.items():
        if hasattr(args, k) and getattr(args, k) is None:
            setattr(args, k, v)
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            over = json.load(fh)
        if not isinstance(over, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        for k, v in over.items():
            key = k.replace("-", "_")
            if not hasattr(args, key) or key in ("func", "command", "config"):
                raise ConfigError(f"{args.config}: unknown key {k!r} for {args.command}")
            setattr(args, key, v)
    if isinstance(getattr(args, "modalities", None), (list, tuple)):
        args.modalities = ",".join(args.modalities)
    return args


def _fail(exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        resolve(args)
        args.func(args)
    except QsbdError as exc:
        return _fail(exc, exc.exit_code)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(exc, 1)
    except (TypeError, ValueError) as exc:
        return _fail(exc, 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
