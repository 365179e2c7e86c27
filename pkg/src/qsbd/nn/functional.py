"""Differentiable ops. Spatial tensors are channels-last: (N, H, W, C).

Convolution weights are (kh, kw, C_in, C_out). Every op keeps the dtype of
its inputs, so the same code runs in float32 for training and float64 for
finite-difference verification.
"""
from __future__ import annotations

import numpy as np

from ..errors import LengthMismatch, ShapeMismatch
from .tensor import Tensor, result

# Callbacks receiving the boolean "x > 0" mask of every relu evaluation;
# gradient checking uses this to notice finite-difference steps that
# straddle a kink.
relu_observers: list = []


def _need(t: Tensor) -> bool:
    return t.requires_grad


# --------------------------------------------------------------------------
# convolution

def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int | None = None) -> Tensor:
    """2-D cross-correlation, NHWC input, (kh, kw, Cin, Cout) weights."""
    if x.ndim != 4:
        raise ShapeMismatch(f"conv2d expects (N, H, W, C) input, got shape {x.shape}")
    kh, kw, cin, cout = w.shape
    if x.shape[3] != cin:
        raise ShapeMismatch(f"conv2d input has {x.shape[3]} channels, kernel expects {cin}")
    if stride not in (1, 2):
        raise ShapeMismatch(f"conv2d stride must be 1 or 2, got {stride}")
    if padding is None:
        padding = (kh - 1) // 2
    if kh == 1 and kw == 1 and padding == 0:
        return _conv1x1(x, w, stride)
    if stride == 1 and kh == kw and kh % 2 == 1 and padding == (kh - 1) // 2 and cin >= 4:
        return _conv_same_shift(x, w)
    return _conv_im2col(x, w, stride, padding)


def _conv1x1(x: Tensor, w: Tensor, stride: int) -> Tensor:
    xs = x.data[:, ::stride, ::stride, :]
    n, ho, wo, cin = xs.shape
    w2 = w.data[0, 0]
    x2 = np.ascontiguousarray(xs).reshape(-1, cin)
    out = (x2 @ w2).reshape(n, ho, wo, -1)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        if _need(w):
            w.accumulate((x2.T @ g2)[None, None])
        if _need(x):
            dx = np.zeros_like(x.data)
            dx[:, ::stride, ::stride, :] = (g2 @ w2.T).reshape(n, ho, wo, cin)
            x.accumulate(dx)

    return result(out, (x, w), backward)


def _conv_same_shift(x: Tensor, w: Tensor) -> Tensor:
    """Stride-1 'same' convolution as a sum of k*k shifted matmuls.

    The zero-padded batch is flattened to (N*Hp*Wp, C); a kernel tap at
    (i, j) is then a constant row offset, so each shifted operand is a
    contiguous slice and no im2col buffer is ever built. Rows belonging to
    the padding ring produce garbage that is cropped (forward) or masked by
    a zero gradient (backward).
    """
    n, h, wd, cin = x.shape
    k = w.shape[0]
    p = (k - 1) // 2
    hp, wp = h + 2 * p, wd + 2 * p
    m = n * hp * wp
    off0 = p * wp + p
    offsets = [(i - p) * wp + (j - p) for i in range(k) for j in range(k)]
    xf = np.zeros((m + 2 * off0, cin), dtype=x.dtype)
    xf[off0:off0 + m].reshape(n, hp, wp, cin)[:, p:p + h, p:p + wd] = x.data
    wt = w.data.reshape(k * k, cin, -1)
    full = xf[off0 + offsets[0]:off0 + offsets[0] + m] @ wt[0]
    for t in range(1, k * k):
        o = off0 + offsets[t]
        full += xf[o:o + m] @ wt[t]
    out = np.ascontiguousarray(full.reshape(n, hp, wp, -1)[:, p:p + h, p:p + wd])

    def backward(g):
        gf = np.zeros((n, hp, wp, g.shape[-1]), dtype=g.dtype)
        gf[:, p:p + h, p:p + wd] = g
        gf = gf.reshape(m, -1)
        if _need(w):
            dw = np.empty_like(wt)
            for t in range(k * k):
                o = off0 + offsets[t]
                dw[t] = xf[o:o + m].T @ gf
            w.accumulate(dw.reshape(w.shape))
        if _need(x):
            dxf = np.zeros_like(xf)
            for t in range(k * k):
                o = off0 + offsets[t]
                dxf[o:o + m] += gf @ wt[t].T
            x.accumulate(dxf[off0:off0 + m].reshape(n, hp, wp, cin)[:, p:p + h, p:p + wd])

    return result(out, (x, w), backward)


def _conv_im2col(x: Tensor, w: Tensor, stride: int, padding: int) -> Tensor:
    n, h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"conv2d input {h}x{wd} too small for kernel {kh}x{kw}")
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    taps = [(i, j) for i in range(kh) for j in range(kw)]
    cols = np.concatenate(
        [xp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :] for i, j in taps],
        axis=3).reshape(-1, kh * kw * cin)
    w2 = w.data.reshape(kh * kw * cin, cout)
    out = (cols @ w2).reshape(n, ho, wo, cout)

    def backward(g):
        g2 = g.reshape(-1, cout)
        if _need(w):
            w.accumulate((cols.T @ g2).reshape(w.shape))
        if _need(x):
            dcols = (g2 @ w2.T).reshape(n, ho, wo, kh * kw, cin)
            dxp = np.zeros_like(xp)
            for t, (i, j) in enumerate(taps):
                dxp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :] += dcols[:, :, :, t]
            x.accumulate(dxp[:, padding:padding + h, padding:padding + wd])

    return result(out, (x, w), backward)


# --------------------------------------------------------------------------
# normalization

def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Normalize over every axis but the last (channels).

    Training mode uses batch statistics and updates the running buffers in
    place (unbiased variance, as in the usual convention); eval mode uses
    the buffers and is a fixed affine map.
    """
    c = x.shape[-1]
    if gamma.shape != (c,):
        raise ShapeMismatch(f"batch_norm: {c} channels but gamma has shape {gamma.shape}")
    x2 = x.data.reshape(-1, c)
    cnt = x2.shape[0]
    if training:
        if cnt < 2:
            raise ShapeMismatch("batch_norm in training mode needs more than one value per channel")
        mean = x2.mean(axis=0)
        xc = x2 - mean
        var = np.einsum("ij,ij->j", xc, xc) / cnt
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * cnt / (cnt - 1)
    else:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (x2 - running_mean) * inv
    inv = inv.astype(x.dtype, copy=False)
    xhat = xhat.astype(x.dtype, copy=False)
    out = (xhat * gamma.data + beta.data).reshape(x.shape)

    def backward(g):
        g2 = g.reshape(-1, c)
        if _need(gamma):
            gamma.accumulate(np.einsum("ij,ij->j", g2, xhat))
        if _need(beta):
            beta.accumulate(g2.sum(axis=0))
        if _need(x):
            gx = g2 * gamma.data
            if training:
                gsum = gx.sum(axis=0)
                gdot = np.einsum("ij,ij->j", gx, xhat)
                dx = (gx - (gsum + xhat * gdot) / cnt) * inv
            else:
                dx = gx * inv
            x.accumulate(dx.reshape(x.shape))

    return result(out, (x, gamma, beta), backward)


def group_norm(x: Tensor, gamma: Tensor, beta: Tensor, groups: int, eps: float = 1e-5) -> Tensor:
    """Per-sample normalization over (H, W, channels-in-group)."""
    n, h, w, c = x.shape
    if c % groups:
        raise ShapeMismatch(f"group_norm: {c} channels not divisible by {groups} groups")
    xg = x.data.reshape(n, h * w, groups, c // groups)
    cnt = h * w * (c // groups)
    mean = xg.mean(axis=(1, 3), keepdims=True)
    xc = xg - mean
    var = (xc * xc).mean(axis=(1, 3), keepdims=True)
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype, copy=False)
    xhat = xc * inv
    out = xhat.reshape(x.shape) * gamma.data + beta.data

    def backward(g):
        if _need(gamma):
            gamma.accumulate((g * xhat.reshape(x.shape)).sum(axis=(0, 1, 2)))
        if _need(beta):
            beta.accumulate(g.sum(axis=(0, 1, 2)))
        if _need(x):
            gx = (g * gamma.data).reshape(xg.shape)
            gsum = gx.sum(axis=(1, 3), keepdims=True)
            gdot = (gx * xhat).sum(axis=(1, 3), keepdims=True)
            x.accumulate(((gx - (gsum + xhat * gdot) / cnt) * inv).reshape(x.shape))

    return result(out, (x, gamma, beta), backward)


# --------------------------------------------------------------------------
# elementwise / shape ops

def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    for obs in relu_observers:
        obs(pos)
    out = x.data * pos

    def backward(g):
        x.accumulate(g * pos)

    return result(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype, copy=False)

    def backward(g):
        x.accumulate(g * out * (1 - out))

    return result(out, (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        if _need(a):
            a.accumulate(g)
        if _need(b):
            b.accumulate(g)

    return result(a.data + b.data, (a, b), backward)


def mul_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar sum(x * weights) with constant weights; a probe loss for tests."""
    weights = np.asarray(weights, dtype=x.dtype)

    def backward(g):
        x.accumulate(g * weights)

    return result(np.asarray(np.sum(x.data * weights)), (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    n, h, w, c = x.shape
    out = x.data.mean(axis=(1, 2))

    def backward(g):
        x.accumulate(np.broadcast_to(g[:, None, None, :] / (h * w), x.shape))

    return result(out, (x,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` for x of shape (N, in) and w of shape (in, out)."""
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"linear: input {x.shape} incompatible with weight {w.shape}")
    out = x.data @ w.data
    if b is not None:
        out = out + b.data

    def backward(g):
        if _need(w):
            w.accumulate(x.data.T @ g)
        if b is not None and _need(b):
            b.accumulate(g.sum(axis=0))
        if _need(x):
            x.accumulate(g @ w.data.T)

    return result(out, (x, w) if b is None else (x, w, b), backward)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-p) so E[out] = x."""
    if not training or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    scale = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)

    def backward(g):
        x.accumulate(g * scale)

    return result(x.data * scale, (x,), backward)


def concat(xs, axis: int = -1) -> Tensor:
    xs = list(xs)
    sizes = [t.shape[axis] for t in xs]
    out = np.concatenate([t.data for t in xs], axis=axis)

    def backward(g):
        start = 0
        for t, s in zip(xs, sizes):
            if _need(t):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(start, start + s)
                t.accumulate(g[tuple(idx)])
            start += s

    return result(out, tuple(xs), backward)


def reshape(x: Tensor, shape) -> Tensor:
    def backward(g):
        x.accumulate(g.reshape(x.shape))

    return result(x.data.reshape(shape), (x,), backward)


def bce_loss(prob: Tensor, target, pos_weight: float | None = None, eps: float = 1e-7) -> Tensor:
    """Mean binary cross-entropy on probabilities, clamped to [eps, 1-eps].

    ``pos_weight`` scales the positive-class term. Clamped entries get zero
    gradient.
    """
    y = np.asarray(target, dtype=prob.dtype).reshape(-1)
    pr = prob.data.reshape(-1)
    if y.shape != pr.shape:
        raise LengthMismatch(f"bce_loss: {pr.size} predictions but {y.size} labels")
    w = 1.0 if pos_weight is None else float(pos_weight)
    n = pr.size
    pc = np.clip(pr, eps, 1 - eps)
    loss = -np.sum(w * y * np.log(pc) + (1 - y) * np.log1p(-pc)) / n

    def backward(g):
        inside = (pr > eps) & (pr < 1 - eps)
        d = -(w * y / pc - (1 - y) / (1 - pc)) / n * inside
        prob.accumulate((g * d).reshape(prob.shape))

    return result(np.asarray(loss, dtype=prob.dtype), (prob,), backward)
