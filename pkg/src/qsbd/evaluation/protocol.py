"""Experiment runners: single split, stratified k-fold and leave-one-city-out.

Each runner trains one model per split, scores the held-out samples and
returns a :class:`SplitResult` per split. ``build_report`` turns a list of
results into the serializable ``report.json`` layout.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..datasetbuild.store import SampleSet
from ..fusion import FusionConfig
from ..training import TrainConfig, predict, train
from .metrics import METRIC_KEYS, evaluate
from .splits import aggregate_folds, leave_one_city_out, stratified_kfold

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictionRecord:
    building_id: str
    city: str
    score: float
    label: int


@dataclass
class SplitResult:
    name: str
    train_idx: np.ndarray
    test_idx: np.ndarray
    scores: np.ndarray
    report: dict                     # best-F1 threshold on the test scores
    train_threshold_report: dict     # threshold picked on the inner validation split
    best_epoch: int
    train_loss: list

    def predictions(self, samples: SampleSet):
        ids, cities = samples.ids(), samples.cities()
        return [PredictionRecord(str(ids[i]), str(cities[i]), float(s), int(samples.label[i]))
                for i, s in zip(self.test_idx, self.scores)]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_train": int(len(self.train_idx)),
            "n_test": int(len(self.test_idx)),
            "test_positives": int(self.report["tp"] + self.report["fn"]),
            "report": self.report,
            "train_threshold_report": self.train_threshold_report,
            "best_epoch": self.best_epoch,
            "train_loss": self.train_loss,
        }


def run_split(samples: SampleSet, name, train_idx, test_idx, fusion: FusionConfig, cfg: TrainConfig) -> SplitResult:
    """Train on ``train_idx`` and evaluate on ``test_idx``."""
    res = train(samples, train_idx, fusion, cfg)
    scores = predict(res.model, res.norm, samples, test_idx)
    y = samples.label[test_idx]
    rep = evaluate(scores, y).to_dict()
    rep_t = evaluate(scores, y, res.stats.val_threshold).to_dict()
    log.info("%s: auroc %.4f f1 %.4f (train-threshold f1 %.4f)", name, rep["auroc"], rep["f1"], rep_t["f1"])
    return SplitResult(str(name), np.asarray(train_idx), np.asarray(test_idx), scores, rep, rep_t,
                       res.stats.best_epoch, list(res.stats.train_loss))


def _run_job(args):
    return run_split(*args)


def _run_all(jobs_args, jobs: int):
    if jobs <= 1 or len(jobs_args) <= 1:
        return [_run_job(a) for a in jobs_args]
    # each split is seeded on its own, so the schedule cannot change results
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run_job, jobs_args))


def cross_validate(samples: SampleSet, fusion: FusionConfig, cfg: TrainConfig = TrainConfig(),
                   k: int = 5, seed: int = 0, jobs: int = 1):
    """Stratified k-fold: one model per fold, scored on the held-out fold."""
    folds = stratified_kfold(samples.label, k, seed)
    args = [(samples, f"fold{i}", tr, te, fusion, cfg) for i, (tr, te) in enumerate(folds)]
    return _run_all(args, jobs)


def loco(samples: SampleSet, fusion: FusionConfig, cfg: TrainConfig = TrainConfig(), jobs: int = 1):
    """Leave-one-city-out: each city is the test set once."""
    splits = leave_one_city_out(samples.cities())
    args = [(samples, city, tr, te, fusion, cfg) for city, tr, te in splits]
    return _run_all(args, jobs)


def build_report(kind: str, results, config: dict, manifest_sha256: str | None) -> dict:
    """``report.json`` content: aggregated metrics, per-split rows, config echo."""
    out = {
        "kind": kind,
        "folds": [r.to_dict() for r in results],
        "config": config,
        "dataset": {"manifest_sha256": manifest_sha256},
    }
    if len(results) >= 2:
        out["metrics"] = aggregate_folds([r.report for r in results], METRIC_KEYS)
        out["metrics_train_threshold"] = aggregate_folds([r.train_threshold_report for r in results], METRIC_KEYS)
    elif results:
        out["metrics"] = {k: {"mean": results[0].report[k], "std": None, "text": f"{results[0].report[k]:.3f}"}
                          for k in METRIC_KEYS}
    return out


def format_table(report: dict) -> str:
    """Plain-text table with one row per split and a mean ± std row."""
    head = ["split"] + list(METRIC_KEYS)
    rows = [[f["name"]] + [f"{f['report'][k]:.3f}" for k in METRIC_KEYS] for f in report["folds"]]
    if "metrics" in report and len(report["folds"]) >= 2:
        rows.append(["mean ± std"] + [report["metrics"][k]["text"] for k in METRIC_KEYS])
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    fmt = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths))  # noqa: E731
    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows]) + "\n"


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False, allow_nan=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def predictions_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["building_id", "city", "score", "label"])
    for r in records:
        # repr round-trips the float64 score exactly
        w.writerow([r.building_id, r.city, repr(float(r.score)), int(r.label)])
    return buf.getvalue()


def read_predictions_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [PredictionRecord(r["building_id"], r["city"], float(r["score"]), int(r["label"])) for r in rows]


def write_outputs(out_dir, report: dict, records) -> None:
    """Write ``report.json``, ``report.txt`` and ``predictions.csv``."""
    atomic_write_text(os.path.join(out_dir, "report.json"), canonical_dumps(report))
    atomic_write_text(os.path.join(out_dir, "report.txt"), format_table(report))
    atomic_write_text(os.path.join(out_dir, "predictions.csv"), predictions_csv(records))


def config_echo(fusion: FusionConfig, cfg: TrainConfig, **extra) -> dict:
    return {"fusion": fusion.to_dict(), "train": asdict(cfg), **extra}
