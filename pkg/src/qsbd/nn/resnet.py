"""Basic-block residual encoder for small single-channel patches."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, ShapeMismatch
from . import functional as F
from .layers import Conv2d, Linear, Module, make_norm
from .tensor import as_tensor


@dataclass(frozen=True)
class EncoderConfig:
    family: str = "resnet"
    stem_channels: int = 16
    stage_blocks: tuple = (1, 1)
    stage_channels: tuple = (16, 32)
    embedding: int = 32
    in_channels: int = 1
    norm: str = "batch"

    def __post_init__(self):
        object.__setattr__(self, "stage_blocks", tuple(int(b) for b in self.stage_blocks))
        object.__setattr__(self, "stage_channels", tuple(int(c) for c in self.stage_channels))
        if self.family != "resnet":
            raise ConfigError(f"unknown encoder family {self.family!r}")
        if len(self.stage_blocks) != len(self.stage_channels) or not self.stage_blocks:
            raise ConfigError("stage_blocks and stage_channels must be non-empty and equally long")
        if any(b < 1 for b in self.stage_blocks):
            raise ConfigError("every stage needs at least one block")
        if any(b <= a for a, b in zip(self.stage_channels, self.stage_channels[1:])):
            raise ConfigError("stage channels must strictly increase")
        if self.norm not in ("batch", "group"):
            raise ConfigError(f"norm must be 'batch' or 'group', got {self.norm!r}")

    @property
    def downsamplings(self) -> int:
        return len(self.stage_blocks) - 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_blocks"] = list(self.stage_blocks)
        d["stage_channels"] = list(self.stage_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


PROFILES = {
    "compact": EncoderConfig(stem_channels=16, stage_blocks=(1, 1), stage_channels=(16, 32), embedding=32),
    "full": EncoderConfig(stem_channels=64, stage_blocks=(2, 2, 2, 2),
                          stage_channels=(64, 128, 256, 512), embedding=512),
}


def profile(name: str, **overrides) -> EncoderConfig:
    try:
        base = PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    d = base.to_dict()
    d.update(overrides)
    return EncoderConfig.from_dict(d)


class BasicBlock(Module):
    def __init__(self, cin, cout, stride, norm, rng):
        super().__init__()
        self.conv1 = Conv2d(cin, cout, 3, stride, rng)
        self.bn1 = make_norm(norm, cout)
        self.conv2 = Conv2d(cout, cout, 3, 1, rng)
        self.bn2 = make_norm(norm, cout)
        if stride != 1 or cin != cout:
            self.proj = Conv2d(cin, cout, 1, stride, rng)
            self.proj_bn = make_norm(norm, cout)
        else:
            self.proj = None

    def forward(self, x):
        h = F.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        sc = x if self.proj is None else self.proj_bn(self.proj(x))
        return F.relu(F.add(h, sc))


class ResNetEncoder(Module):
    """CIFAR-style stem (3x3, stride 1, no pooling), residual stages, GAP.

    Stage 0 keeps resolution; each later stage halves it in its first
    block. A linear projection is appended only when ``embedding`` differs
    from the last stage width.
    """

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        object.__setattr__(self, "cfg", cfg)
        self.stem = Conv2d(cfg.in_channels, cfg.stem_channels, 3, 1, rng)
        self.stem_bn = make_norm(cfg.norm, cfg.stem_channels)
        cin = cfg.stem_channels
        blocks = []
        for si, (nb, c) in enumerate(zip(cfg.stage_blocks, cfg.stage_channels)):
            for bi in range(nb):
                stride = 2 if (si > 0 and bi == 0) else 1
                blk = BasicBlock(cin, c, stride, cfg.norm, rng)
                setattr(self, f"layer{si + 1}_{bi}", blk)
                blocks.append(blk)
                cin = c
        object.__setattr__(self, "blocks", blocks)
        if cfg.embedding != cin:
            self.fc = Linear(cin, cfg.embedding, rng)
        else:
            self.fc = None

    def forward(self, x):
        """x: (N, H, W) or (N, H, W, C) array/Tensor -> (N, embedding)."""
        x = as_tensor(x)
        if x.ndim == 3:
            x = F.reshape(x, x.shape + (1,))
        if x.ndim != 4 or x.shape[3] != self.cfg.in_channels:
            raise ShapeMismatch(f"encoder expects (N, H, W, {self.cfg.in_channels}) input, got {x.shape}")
        need = 2 ** self.cfg.downsamplings
        if x.shape[1] < need or x.shape[2] < need:
            raise ShapeMismatch(f"patch {x.shape[1]}x{x.shape[2]} smaller than {need}x{need} "
                                f"required by {self.cfg.downsamplings} downsampling stages")
        h = F.relu(self.stem_bn(self.stem(x)))
        for blk in self.blocks:
            h = blk(h)
        h = F.global_avg_pool(h)
        if self.fc is not None:
            h = self.fc(h)
        return h
