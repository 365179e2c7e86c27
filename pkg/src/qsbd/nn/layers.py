"""Parameterized layers with a tiny module registry."""
from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Parameter, Tensor


class Module:
    """Base class: children and parameters are discovered from attributes.

    Registration order (attribute assignment order) fixes the parameter
    naming and ordering, which the checkpoint format and the optimizer rely
    on.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._children[name] = value
        elif isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = name
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for k, p in self._params.items():
            yield prefix + k, p
        for k, child in self._children.items():
            yield from child.named_parameters(prefix + k + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for k in self._buffers:
            yield prefix + k, getattr(self, k)
        for k, child in self._children.items():
            yield from child.named_buffers(prefix + k + ".")

    def _set_buffer(self, dotted: str, value: np.ndarray) -> None:
        mod = self
        *path, leaf = dotted.split(".")
        for p in path:
            mod = mod._children[p]
        getattr(mod, leaf)[...] = value

    def state_dict(self) -> dict:
        """Parameters then buffers, as ``{name: ndarray}`` (live references)."""
        out = {k: p.data for k, p in self.named_parameters()}
        out.update(dict(self.named_buffers()))
        return out

    def load_state_dict(self, state: dict) -> None:
        for k, p in self.named_parameters():
            p.data[...] = state[k]
        for k, _ in self.named_buffers():
            self._set_buffer(k, state[k])

    def train(self, mode: bool = True):
        object.__setattr__(self, "training", mode)
        for c in self._children.values():
            c.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def to(self, dtype):
        """Cast parameters and buffers in place (float64 for gradient checks)."""
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        self._cast_buffers(dtype)
        return self

    def _cast_buffers(self, dtype):
        for k in self._buffers:
            object.__setattr__(self, k, getattr(self, k).astype(dtype))
        for c in self._children.values():
            c._cast_buffers(dtype)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, stride: int = 1, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.padding = (k - 1) // 2
        self.weight = Parameter(he_uniform(rng, (k, k, cin, cout), k * k * cin))

    def forward(self, x):
        return F.conv2d(x, self.weight, self.stride, self.padding)


class BatchNorm2d(Module):
    def __init__(self, c: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.weight = Parameter(np.ones(c, np.float32))
        self.bias = Parameter(np.zeros(c, np.float32))
        self.register_buffer("running_mean", np.zeros(c, np.float32))
        self.register_buffer("running_var", np.ones(c, np.float32))

    def forward(self, x):
        return F.batch_norm(x, self.weight, self.bias, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class GroupNorm(Module):
    def __init__(self, c: int, groups: int = 8, eps: float = 1e-5):
        super().__init__()
        self.groups = min(groups, c)
        while c % self.groups:
            self.groups -= 1
        self.eps = eps
        self.weight = Parameter(np.ones(c, np.float32))
        self.bias = Parameter(np.zeros(c, np.float32))

    def forward(self, x):
        return F.group_norm(x, self.weight, self.bias, self.groups, self.eps)


def make_norm(kind: str, c: int) -> Module:
    if kind == "batch":
        return BatchNorm2d(c)
    if kind == "group":
        return GroupNorm(c)
    raise ValueError(f"unknown norm {kind!r}")


class Linear(Module):
    def __init__(self, fin: int, fout: int, rng=None, bias: bool = True):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(he_uniform(rng, (fin, fout), fin))
        if bias:
            self.bias = Parameter(np.zeros(fout, np.float32))
        else:
            self.bias = None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class ReLU(Module):
    def forward(self, x):
        return F.relu(x)


class Dropout(Module):
    def __init__(self, p: float, rng: np.random.Generator | None = None):
        super().__init__()
        self.p = p
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x):
        return F.dropout(x, self.p, self.training, self.rng)
