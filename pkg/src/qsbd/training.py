"""Mini-batch training with best-F1 early stopping."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .datasetbuild.records import GemStats, gem_stats
from .datasetbuild.store import SampleSet
from .errors import ConfigError, DivergedLoss, LengthMismatch, SingleClassTrainSet
from .evaluation.metrics import auroc, pr_best_f1_threshold
from .evaluation.splits import stratified_holdout
from .fusion import FusionConfig, FusionModel
from .nn import functional as F
from .nn.checkpoint import Checkpoint, check_compatible
from .nn.optim import Adam
from .nn.tensor import no_grad

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 50
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 10
    clamp_eps: float = 1e-7
    pos_weight: float | None = None
    seed: int = 0
    val_fraction: float = 0.15
    normalization: str = "global"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0 < self.clamp_eps < 0.1:
            raise ConfigError("clamp_eps must lie in (0, 0.1)")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")
        if self.normalization not in ("global", "patch", "none"):
            raise ConfigError(f"normalization must be global, patch or none, got {self.normalization!r}")


def bce_loss(y, y_hat, pos_weight=None, eps: float = 1e-7) -> float:
    """Mean binary cross-entropy of plain arrays (no graph)."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    p = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.shape != p.shape:
        raise LengthMismatch(f"{p.size} predictions but {y.size} labels")
    p = np.clip(p, eps, 1 - eps)
    w = 1.0 if pos_weight is None else float(pos_weight)
    return float(-np.mean(w * y * np.log(p) + (1 - y) * np.log1p(-p)))


@dataclass
class InputNorm:
    """Input scaling fitted on training samples and reused at inference."""

    mode: str = "global"
    sar: tuple = (0.0, 1.0)
    dsm: tuple = (0.0, 1.0)
    gem: GemStats | None = None

    @classmethod
    def fit(cls, samples: SampleSet, idx, mode: str) -> "InputNorm":
        idx = np.asarray(idx)
        gem = gem_stats(samples.gem, idx) if len(idx) >= 2 else None
        if mode != "global":
            return cls(mode, gem=gem)
        out = cls(mode, gem=gem)
        for name in ("sar", "dsm"):
            arr = getattr(samples, name)
            acc = s2 = 0.0
            cnt = 0
            for lo in range(0, len(idx), 512):
                a = arr[idx[lo:lo + 512]].astype(np.float64)
                acc += a.sum()
                s2 += np.square(a).sum()
                cnt += a.size
            m = acc / cnt
            sd = math.sqrt(max(s2 / cnt - m * m, 0.0))
            setattr(out, name, (m, sd if sd > 1e-12 else 1.0))
        return out

    def apply(self, samples: SampleSet, idx) -> dict:
        idx = np.asarray(idx)
        out = {"ftp": samples.mask[idx].astype(np.float32)}
        for name in ("sar", "dsm"):
            a = getattr(samples, name)[idx]
            if self.mode == "global":
                m, sd = getattr(self, name)
                a = (a - np.float32(m)) / np.float32(sd)
            elif self.mode == "patch":
                m = a.mean(axis=(1, 2), keepdims=True)
                sd = a.std(axis=(1, 2), keepdims=True)
                a = (a - m) / np.where(sd > 1e-6, sd, 1.0)
            out[name] = np.ascontiguousarray(a, dtype=np.float32)
        g = samples.gem[idx]
        out["gem"] = (self.gem.apply(g) if self.gem is not None else g).astype(np.float32)
        return out

    def to_dict(self) -> dict:
        return {"mode": self.mode, "sar": list(self.sar), "dsm": list(self.dsm),
                "gem": None if self.gem is None else self.gem.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "InputNorm":
        return cls(d["mode"], tuple(d["sar"]), tuple(d["dsm"]),
                   None if d["gem"] is None else GemStats.from_dict(d["gem"]))


@dataclass
class TrainingStats:
    train_loss: list = field(default_factory=list)
    val_f1: list = field(default_factory=list)
    val_auroc: list = field(default_factory=list)
    best_epoch: int = -1
    best_f1: float = float("nan")
    val_threshold: float = 0.5
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        # wall time is excluded so that serialized stats are reproducible
        d = asdict(self)
        d.pop("wall_time")
        return d


@dataclass
class TrainResult:
    model: FusionModel
    norm: InputNorm
    stats: TrainingStats
    fusion: FusionConfig
    config: TrainConfig

    def checkpoint(self) -> Checkpoint:
        meta = {
            "epoch": self.stats.best_epoch,
            "seed": self.config.seed,
            "loss_history": self.stats.train_loss,
            "stats": self.stats.to_dict(),
            "train_config": asdict(self.config),
            "input_norm": self.norm.to_dict(),
        }
        return Checkpoint(self.model.state_dict(), self.fusion.to_dict(), meta)


def model_from_checkpoint(ckpt: Checkpoint, expect: FusionConfig | None = None):
    """Rebuild ``(model, InputNorm)``; ConfigMismatch when ``expect`` disagrees."""
    cfg = FusionConfig.from_dict(ckpt.config)
    if expect is not None:
        probe = FusionModel(expect)
        check_compatible(ckpt, expect.to_dict(), probe.parameter_shapes())
    model = FusionModel(cfg)
    check_compatible(ckpt, cfg.to_dict(), model.parameter_shapes())
    model.load_state_dict(ckpt.tensors)
    model.eval()
    return model, InputNorm.from_dict(ckpt.meta["input_norm"])


def predict(model: FusionModel, norm: InputNorm, samples: SampleSet, idx=None, batch_size: int = 256) -> np.ndarray:
    """Eval-mode probabilities (float64) for ``idx`` (all samples by default)."""
    idx = np.arange(len(samples)) if idx is None else np.asarray(idx)
    model.eval()
    out = np.empty(len(idx), dtype=np.float64)
    with no_grad():
        for lo in range(0, len(idx), batch_size):
            sl = idx[lo:lo + batch_size]
            out[lo:lo + len(sl)] = model(norm.apply(samples, sl)).data.reshape(-1)
    return out


def _snapshot(model):
    return {k: v.copy() for k, v in model.state_dict().items()}


def train(samples: SampleSet, train_idx, fusion: FusionConfig, cfg: TrainConfig = TrainConfig(),
          val_idx=None, on_epoch=None) -> TrainResult:
    """Fit a fusion model; returns the parameters of the best validation-F1 epoch.

    When ``val_idx`` is None a stratified ``val_fraction`` of ``train_idx``
    is held out for model selection.
    """
    t_start = time.perf_counter()
    train_idx = np.asarray(train_idx, dtype=np.int64)
    y_all = samples.label.astype(np.int64)
    if y_all[train_idx].min(initial=1) == y_all[train_idx].max(initial=0):
        raise SingleClassTrainSet("training split holds a single class")
    if val_idx is None:
        fit_pos, val_pos = stratified_holdout(y_all[train_idx], cfg.val_fraction, cfg.seed)
        fit_idx, val_idx = train_idx[fit_pos], train_idx[val_pos]
    else:
        fit_idx, val_idx = train_idx, np.asarray(val_idx, dtype=np.int64)
    if y_all[fit_idx].min(initial=1) == y_all[fit_idx].max(initial=0):
        raise SingleClassTrainSet("training split holds a single class after the validation hold-out")
    val_ok = len(val_idx) > 0 and 0 < y_all[val_idx].sum() < len(val_idx)
    if not val_ok:
        log.warning("validation split lacks one class; the last epoch is kept")

    if fusion.gem_dim != samples.gem_dim and "gem" in fusion.modalities:
        raise ConfigError(f"model expects {fusion.gem_dim} GEM features, dataset has {samples.gem_dim}")
    norm = InputNorm.fit(samples, fit_idx, cfg.normalization)
    model = FusionModel(fusion, seed=cfg.seed)
    model.head.drop.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 99]))
    opt = Adam(model.parameters(), cfg.lr, (cfg.beta1, cfg.beta2), cfg.adam_eps)
    stats = TrainingStats()
    best_state, best_f1, stale = None, -1.0, 0
    val_y = y_all[val_idx]

    for epoch in range(cfg.epochs):
        model.train()
        order = fit_idx[np.random.default_rng(cfg.seed ^ epoch).permutation(len(fit_idx))]
        total, seen = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            bi = order[lo:lo + cfg.batch_size]
            if len(bi) < 2:
                continue  # batch statistics need two samples
            opt.zero_grad()
            prob = model(norm.apply(samples, bi))
            loss = F.bce_loss(prob, y_all[bi], cfg.pos_weight, cfg.clamp_eps)
            lv = loss.item()
            if not math.isfinite(lv):
                raise DivergedLoss(f"non-finite loss {lv} at epoch {epoch}, batch starting at {lo}")
            loss.backward()
            opt.step()
            total += lv * len(bi)
            seen += len(bi)
        stats.train_loss.append(total / max(seen, 1))

        if val_ok:
            scores = predict(model, norm, samples, val_idx)
            t, _, _, f1 = pr_best_f1_threshold(scores, val_y)
            stats.val_f1.append(f1)
            stats.val_auroc.append(auroc(scores, val_y))
            if f1 > best_f1:
                best_f1, best_state, stale = f1, _snapshot(model), 0
                stats.best_epoch, stats.best_f1, stats.val_threshold = epoch, f1, t
            else:
                stale += 1
        else:
            best_state, stats.best_epoch = _snapshot(model), epoch
        log.info("epoch %d loss %.6f val_f1 %s", epoch, stats.train_loss[-1],
                 f"{stats.val_f1[-1]:.4f}" if val_ok else "n/a")
        if on_epoch is not None:
            on_epoch(epoch, stats)
        if val_ok and stale >= cfg.patience:
            break

    model.load_state_dict(best_state)
    model.eval()
    stats.wall_time = time.perf_counter() - t_start
    return TrainResult(model, norm, stats, fusion, cfg)
