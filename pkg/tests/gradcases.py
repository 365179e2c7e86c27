"""Randomized finite-difference cases shared by the unit and acceptance suites."""
import numpy as np

from qsbd.nn import functional as F
from qsbd.nn import gradcheck
from qsbd.nn.resnet import BasicBlock
from qsbd.nn.tensor import Tensor


def _p(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0, scale, size=shape), requires_grad=True)


def _probe(out, rng):
    # random projection turns any output into a scalar with a generic gradient
    w = rng.normal(size=out.shape)
    return F.mul_sum(out, w)


def layer_cases(seed):
    """Yield ``(name, fn, tensors)`` covering every differentiable op."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    h = int(rng.integers(4, 7))
    w = int(rng.integers(4, 7))
    cin = int(rng.integers(4, 6))
    cout = int(rng.integers(2, 5))

    x = _p(rng, n, h, w, cin)
    k3 = _p(rng, 3, 3, cin, cout, scale=0.3)
    pw = rng.normal(size=(n, h, w, cout))
    yield "conv3x3_s1", lambda: F.mul_sum(F.conv2d(x, k3, 1), pw), [x, k3]

    x1 = _p(rng, n, h, w, 1)
    k1 = _p(rng, 3, 3, 1, cout, scale=0.3)
    yield "conv3x3_s1_c1", lambda: F.mul_sum(F.conv2d(x1, k1, 1), pw), [x1, k1]

    ho, wo = (h - 1) // 2 + 1, (w - 1) // 2 + 1
    pw2 = rng.normal(size=(n, ho, wo, cout))
    yield "conv3x3_s2", lambda: F.mul_sum(F.conv2d(x, k3, 2), pw2), [x, k3]

    kp = _p(rng, 1, 1, cin, cout, scale=0.3)
    yield "conv1x1_s2", lambda: F.mul_sum(F.conv2d(x, kp, 2), pw2), [x, kp]

    g = _p(rng, cin, scale=0.5)
    b = _p(rng, cin, scale=0.5)
    pwx = rng.normal(size=x.shape)

    def bn_train():
        rm, rv = np.zeros(cin), np.ones(cin)
        return F.mul_sum(F.batch_norm(x, g, b, rm, rv, True), pwx)
    yield "batchnorm_train", bn_train, [x, g, b]

    rm0 = rng.normal(size=cin)
    rv0 = rng.uniform(0.5, 2.0, size=cin)
    yield "batchnorm_eval", lambda: F.mul_sum(F.batch_norm(x, g, b, rm0, rv0, False), pwx), [x, g, b]

    yield "groupnorm", lambda: F.mul_sum(F.group_norm(x, g, b, 2 if cin % 2 == 0 else 1), pwx), [x, g, b]
    yield "relu", lambda: F.mul_sum(F.relu(x), pwx), [x]
    yield "sigmoid", lambda: F.mul_sum(F.sigmoid(x), pwx), [x]

    pg = rng.normal(size=(n, cin))
    yield "global_avg_pool", lambda: F.mul_sum(F.global_avg_pool(x), pg), [x]

    v = _p(rng, n, cin)
    lw = _p(rng, cin, cout, scale=0.5)
    lb = _p(rng, cout, scale=0.5)
    pl = rng.normal(size=(n, cout))
    yield "linear", lambda: F.mul_sum(F.linear(v, lw, lb), pl), [v, lw, lb]

    dseed = int(rng.integers(1 << 30))
    pv = rng.normal(size=v.shape)
    yield "dropout", lambda: F.mul_sum(F.dropout(v, 0.5, True, np.random.default_rng(dseed)), pv), [v]

    u = _p(rng, n, cout)
    pc = rng.normal(size=(n, cin + cout))
    yield "concat", lambda: F.mul_sum(F.concat([v, u]), pc), [v, u]

    x2 = _p(rng, n, h, w, cin)
    yield "add", lambda: F.mul_sum(F.add(x, x2), pwx), [x, x2]

    pr = Tensor(rng.uniform(0.05, 0.95, size=(n * 3, 1)), requires_grad=True)
    y = rng.integers(0, 2, size=n * 3)
    pos_w = float(rng.uniform(0.5, 3.0))
    yield "bce", lambda: F.bce_loss(pr, y), [pr]
    yield "bce_weighted", lambda: F.bce_loss(pr, y, pos_weight=pos_w), [pr]

    blk = BasicBlock(cin, cout + cin, 2, "batch", rng).to(np.float64)
    names, params = zip(*blk.named_parameters())
    xb = _p(rng, n, h, w, cin)
    pb = rng.normal(size=(n, ho, wo, cout + cin))
    yield "basic_block", lambda: F.mul_sum(blk(xb), pb), [xb, *params]


def check_layers(seed, tol=1e-4):
    """Run every layer case for one seed; returns ``{name: GradReport}``."""
    out = {}
    for name, fn, tensors in layer_cases(seed):
        out[name] = gradcheck(fn, tensors, max_coords=40, rng=np.random.default_rng(seed))
    return out


def fusion_case(seed, modalities=("sar", "ftp", "dsm", "gem"), size=8, n=4):
    """End-to-end compact fusion model in float64; returns ``(fn, tensors, names)``."""
    from qsbd.fusion import FusionConfig, FusionModel

    rng = np.random.default_rng(seed)
    cfg = FusionConfig(modalities=modalities, gem_dim=3, head_hidden=16)
    model = FusionModel(cfg, seed=seed).to(np.float64)
    model.train()
    batch = {
        "sar": rng.gamma(4.0, 0.25, size=(n, size, size)),
        "ftp": (rng.random((n, size, size)) < 0.4).astype(np.float64),
        "dsm": rng.normal(0, 3.0, size=(n, size, size)),
        "gem": rng.normal(size=(n, 3)),
    }
    probe = rng.normal(size=(n, 1))
    dseed = int(rng.integers(1 << 30))

    def fn():
        model.head.drop.rng = np.random.default_rng(dseed)
        return F.mul_sum(model(batch), probe)

    names, tensors = zip(*model.named_parameters())
    return fn, list(tensors), list(names)


def check_fusion(seed, max_coords=3):
    fn, tensors, names = fusion_case(seed)
    return gradcheck(fn, tensors, names, max_coords=max_coords, rng=np.random.default_rng(seed))
