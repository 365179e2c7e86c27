"""Late-fusion classifier: one encoder per modality, concatenation, MLP head."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MissingModality, ShapeMismatch
from .nn import functional as F
from .nn.layers import Dropout, Linear, Module
from .nn.resnet import EncoderConfig, ResNetEncoder, profile
from .nn.tensor import Tensor, as_tensor

MODALITIES = ("sar", "ftp", "dsm", "gem")
SPATIAL = ("sar", "ftp", "dsm")
REQUIRED = ("sar", "ftp")


def parse_modalities(text) -> tuple:
    """Accept ``"sar,ftp,dsm"`` or an iterable; returns canonical order."""
    items = text.split(",") if isinstance(text, str) else list(text)
    items = [m.strip().lower() for m in items if m.strip()]
    unknown = sorted(set(items) - set(MODALITIES))
    if unknown:
        raise ConfigError(f"unknown modalities {unknown}; choose from {list(MODALITIES)}")
    return tuple(m for m in MODALITIES if m in items)


@dataclass(frozen=True)
class FusionConfig:
    modalities: tuple = MODALITIES
    encoder: EncoderConfig = field(default_factory=lambda: profile("compact"))
    gem_dim: int = 8
    gem_hidden: tuple = (64, 64)
    head_hidden: int = 256
    dropout: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "modalities", parse_modalities(self.modalities))
        object.__setattr__(self, "gem_hidden", tuple(int(h) for h in self.gem_hidden))
        missing = [m for m in REQUIRED if m not in self.modalities]
        if missing:
            raise ConfigError(f"modalities must include sar and ftp (missing {missing})")
        if "gem" in self.modalities and (self.gem_dim < 1 or not self.gem_hidden):
            raise ConfigError("gem path needs gem_dim >= 1 and at least one hidden layer")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def embedding_dims(self) -> dict:
        return {m: (self.gem_hidden[-1] if m == "gem" else self.encoder.embedding) for m in self.modalities}

    @property
    def fused_dim(self) -> int:
        return sum(self.embedding_dims.values())

    def to_dict(self) -> dict:
        return {
            "modalities": list(self.modalities),
            "encoder": self.encoder.to_dict(),
            "gem_dim": self.gem_dim,
            "gem_hidden": list(self.gem_hidden),
            "head_hidden": self.head_hidden,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig.from_dict(d["encoder"])
        return cls(**d)


@dataclass
class FusionActivations:
    embeddings: dict          # modality -> Tensor (N, dim), enabled modalities only
    fused: Tensor | None = None
    logit: Tensor | None = None
    prob: Tensor | None = None


class GemMLP(Module):
    def __init__(self, gem_dim, hidden, rng):
        super().__init__()
        widths = (gem_dim, *hidden)
        layers = []
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            lin = Linear(a, b, rng)
            setattr(self, f"fc{i}", lin)
            layers.append(lin)
        object.__setattr__(self, "layers", layers)

    def forward(self, x):
        for lin in self.layers:
            x = F.relu(lin(x))
        return x


class Head(Module):
    def __init__(self, fin, hidden, p, rng):
        super().__init__()
        self.fc1 = Linear(fin, hidden, rng)
        self.drop = Dropout(p, np.random.default_rng(rng.integers(1 << 63)))
        self.fc2 = Linear(hidden, 1, rng)

    def forward(self, x):
        return self.fc2(self.drop(F.relu(self.fc1(x))))


class FusionModel(Module):
    """Separate encoders per enabled modality; parameters prefixed by modality.

    Each sub-network draws its initial weights from its own stream derived
    from ``(seed, modality index)``, so enabling or disabling one modality
    never changes the initialization of another.
    """

    def __init__(self, cfg: FusionConfig, seed: int = 0):
        super().__init__()
        object.__setattr__(self, "cfg", cfg)
        streams = {m: np.random.default_rng(np.random.SeedSequence([seed, i]))
                   for i, m in enumerate(MODALITIES + ("head",))}
        for m in cfg.modalities:
            if m == "gem":
                self.gem = GemMLP(cfg.gem_dim, cfg.gem_hidden, streams["gem"])
            else:
                setattr(self, m, ResNetEncoder(cfg.encoder, streams[m]))
        self.head = Head(cfg.fused_dim, cfg.head_hidden, cfg.dropout, streams["head"])

    def encode(self, batch: dict) -> FusionActivations:
        emb = {}
        for m in self.cfg.modalities:
            arr = batch.get(m)
            if arr is None:
                raise MissingModality(f"batch lacks the enabled modality {m!r}")
            if m == "gem":
                x = as_tensor(arr)
                if x.ndim != 2 or x.shape[1] != self.cfg.gem_dim:
                    raise ShapeMismatch(f"gem input must be (N, {self.cfg.gem_dim}), got {x.shape}")
                emb[m] = self.gem(x)
            else:
                emb[m] = getattr(self, m)(arr)
        sizes = {e.shape[0] for e in emb.values()}
        if len(sizes) != 1:
            raise ShapeMismatch(f"modalities disagree on batch size: {sorted(sizes)}")
        return FusionActivations(emb)

    def fuse(self, acts: FusionActivations) -> Tensor:
        acts.fused = F.concat([acts.embeddings[m] for m in MODALITIES if m in acts.embeddings], axis=1)
        return acts.fused

    def classify(self, acts: FusionActivations) -> Tensor:
        if acts.fused.shape[1] != self.cfg.fused_dim:
            raise ShapeMismatch(f"fused vector has {acts.fused.shape[1]} dims, head expects {self.cfg.fused_dim}")
        acts.logit = self.head(acts.fused)
        acts.prob = F.sigmoid(acts.logit)
        return acts.prob

    def forward(self, batch: dict) -> Tensor:
        """Return probabilities of shape (N, 1)."""
        acts = self.encode(batch)
        self.fuse(acts)
        return self.classify(acts)

    def activations(self, batch: dict) -> FusionActivations:
        acts = self.encode(batch)
        self.fuse(acts)
        self.classify(acts)
        return acts

    def parameter_shapes(self) -> dict:
        return {k: v.shape for k, v in self.state_dict().items()}
