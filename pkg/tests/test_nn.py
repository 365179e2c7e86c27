import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradcases import check_layers
from qsbd.errors import ChecksumMismatch, ConfigError, ConfigMismatch, ShapeMismatch
from qsbd.nn import (Adam, AdamState, Checkpoint, Dropout, Module, ResNetEncoder, adam_step,
                     check_compatible, gradcheck, load_checkpoint, no_grad, profile, save_checkpoint)
from qsbd.nn import functional as F
from qsbd.nn.checkpoint import checkpoint_bytes, parse_checkpoint
from qsbd.nn.layers import BatchNorm2d
from qsbd.nn.tensor import Parameter, Tensor, result


def naive_conv(x, w, stride, pad):
    # direct nested-sum oracle
    n, h, wd, _ = x.shape
    kh, kw, _, co = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, ho, wo, co))
    for r in range(ho):
        for c in range(wo):
            win = xp[:, r * stride:r * stride + kh, c * stride:c * stride + kw, :]
            out[:, r, c, :] = np.einsum("nijc,ijco->no", win, w)
    return out


# ---------------------------------------------------------------- gradients

def test_layer_gradients_100_seeds():
    worst = {}
    checked = skipped = 0
    for seed in range(100):
        for name, rep in check_layers(seed).items():
            worst[name] = max(worst.get(name, 0.0), rep.max_rel_err)
            checked += rep.checked
            skipped += rep.skipped
    assert max(worst.values()) < 1e-4, worst
    # kinks should be rare events, not the bulk of the sample
    assert skipped < 0.01 * checked


def test_gradcheck_catches_wrong_gradient():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 4)), requires_grad=True)

    def bad_square(t):
        def backward(g):
            t.accumulate(g * 3 * t.data)  # should be 2x
        return result(t.data ** 2, (t,), backward)

    rep = gradcheck(lambda: F.mul_sum(bad_square(x), np.ones((3, 4))), [x])
    assert rep.max_rel_err > 0.1


def test_gradcheck_skips_kink_crossings():
    x = Tensor(np.array([[1e-7, -2e-7, 1.0]]), requires_grad=True)
    rep = gradcheck(lambda: F.mul_sum(F.relu(x), np.ones((1, 3))), [x], h=1e-6)
    assert rep.skipped == 2 and rep.checked == 1


def test_gradcheck_requires_float64():
    x = Tensor(np.ones(3, np.float32), requires_grad=True)
    with pytest.raises(TypeError):
        gradcheck(lambda: F.mul_sum(x, np.ones(3)), [x])


# ---------------------------------------------------------------- forward ops

def test_sigmoid_zero_and_tails():
    out = F.sigmoid(Tensor(np.array([0.0, 800.0, -800.0]))).data
    assert out[0] == 0.5
    assert out[1] == 1.0 and out[2] == 0.0
    assert np.all(np.isfinite(out))


def test_identity_1x1_conv_is_identity():
    x = np.random.default_rng(1).normal(size=(2, 5, 5, 3)).astype(np.float32)
    w = np.eye(3, dtype=np.float32)[None, None]
    assert np.array_equal(F.conv2d(Tensor(x), Tensor(w), 1, 0).data, x)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(3, 9), st.integers(3, 9),
       st.integers(1, 6), st.integers(1, 5), st.sampled_from([1, 2]))
def test_conv_matches_direct_sum(seed, n, h, w, cin, cout, stride):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, h, w, cin))
    k = rng.normal(size=(3, 3, cin, cout))
    got = F.conv2d(Tensor(x), Tensor(k), stride).data
    np.testing.assert_allclose(got, naive_conv(x, k, stride, 1), rtol=1e-10, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 8), st.integers(2, 4))
def test_shift_path_matches_im2col_path(seed, cin, cout):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(2, 6, 7, cin)), requires_grad=True)
    k = Tensor(rng.normal(size=(3, 3, cin, cout)), requires_grad=True)
    pw = rng.normal(size=(2, 6, 7, cout))
    grads = []
    for path in (F._conv_same_shift, lambda a, b: F._conv_im2col(a, b, 1, 1)):
        x.grad = k.grad = None
        out = path(x, k)
        F.mul_sum(out, pw).backward()
        grads.append((out.data, x.grad.copy(), k.grad.copy()))
    for a, b in zip(*grads):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)


def test_conv_shape_errors():
    x = Tensor(np.zeros((1, 4, 4, 3)))
    with pytest.raises(ShapeMismatch):
        F.conv2d(x, Tensor(np.zeros((3, 3, 2, 4))))
    with pytest.raises(ShapeMismatch):
        F.conv2d(x, Tensor(np.zeros((3, 3, 3, 4))), stride=3)
    with pytest.raises(ShapeMismatch):
        F.conv2d(Tensor(np.zeros((4, 4, 3))), Tensor(np.zeros((3, 3, 3, 4))))


def test_linear_shape_error():
    with pytest.raises(ShapeMismatch):
        F.linear(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))


def test_batchnorm_eval_uses_running_stats():
    bn = BatchNorm2d(3)
    bn.running_mean[:] = [1.0, -2.0, 0.5]
    bn.running_var[:] = [4.0, 1.0, 0.25]
    bn.eval()
    x = np.random.default_rng(2).normal(size=(2, 3, 3, 3)).astype(np.float32)
    want = (x - bn.running_mean) / np.sqrt(bn.running_var + 1e-5)
    np.testing.assert_allclose(bn(Tensor(x)).data, want, rtol=1e-5, atol=1e-6)


def test_batchnorm_train_eval_converge():
    rng = np.random.default_rng(3)
    bn = BatchNorm2d(4)
    mu = np.array([3.0, -1.0, 0.0, 10.0])
    sd = np.array([2.0, 0.5, 1.0, 3.0])
    for _ in range(300):
        bn(Tensor((rng.normal(size=(64, 8, 8, 4)) * sd + mu).astype(np.float32)))
    x = Tensor((rng.normal(size=(64, 8, 8, 4)) * sd + mu).astype(np.float32))
    train_out = bn(x).data
    bn.eval()
    assert np.abs(bn(x).data - train_out).max() < 0.05


def test_inverted_dropout_preserves_expectation():
    rng = np.random.default_rng(4)
    x = Tensor(rng.uniform(0.5, 2.0, size=(1, 6)))
    drop = Dropout(0.5, np.random.default_rng(5))
    acc = np.zeros((1, 6))
    passes = 100_000
    for _ in range(passes):
        acc += drop(x).data
    drop.eval()
    ev = drop(x).data
    assert np.array_equal(ev, x.data)
    np.testing.assert_allclose(acc / passes, ev, rtol=0.01)


def test_no_grad_records_nothing():
    p = Parameter(np.ones(3))
    with no_grad():
        out = F.relu(p)
    assert not out.requires_grad and out._backward is None


# ---------------------------------------------------------------- encoder

def test_compact_encoder_embedding_dim():
    enc = ResNetEncoder(profile("compact")).eval()
    x = np.random.default_rng(6).normal(size=(3, 32, 32)).astype(np.float32)
    assert enc(x).shape == (3, 32)


def test_full_encoder_embedding_dim():
    enc = ResNetEncoder(profile("full")).eval()
    x = np.random.default_rng(7).normal(size=(2, 32, 32)).astype(np.float32)
    assert enc(x).shape == (2, 512)


def test_encoder_eval_deterministic():
    enc = ResNetEncoder(profile("compact")).eval()
    x = np.random.default_rng(8).normal(size=(2, 32, 32)).astype(np.float32)
    with no_grad():
        a = enc(x).data
        b = enc(x.copy()).data
    assert np.array_equal(a, b)
    # identical samples within one batch agree too
    with no_grad():
        c = enc(np.stack([x[0], x[0]])).data
    assert np.array_equal(c[0], c[1])


def test_encoder_rejects_too_small_patch():
    enc = ResNetEncoder(profile("full"))
    with pytest.raises(ShapeMismatch):
        enc(np.zeros((2, 4, 4), np.float32))


@pytest.mark.parametrize("kw", [
    dict(stage_blocks=(1, 0), stage_channels=(16, 32)),
    dict(stage_blocks=(1, 1), stage_channels=(32, 32)),
    dict(stage_blocks=(1,), stage_channels=(16, 32)),
    dict(norm="layer"),
])
def test_encoder_config_invariants(kw):
    with pytest.raises(ConfigError):
        profile("compact", **kw)


def test_group_norm_option_runs():
    enc = ResNetEncoder(profile("compact", norm="group"))
    out = enc(np.random.default_rng(9).normal(size=(1, 16, 16)).astype(np.float32))
    assert out.shape == (1, 32)


# ---------------------------------------------------------------- optimizer

def test_adam_zero_gradient_leaves_params():
    w = np.array([1.5, -2.0])
    adam_step([w], [np.zeros(2)], AdamState(), lr=0.1)
    assert np.array_equal(w, [1.5, -2.0])


def test_adam_first_step_size():
    w = np.array([0.0])
    adam_step([w], [np.array([1.0])], AdamState(), lr=0.1, beta1=0.9, beta2=0.999)
    assert w[0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_quadratic_bowl():
    w = np.array([1.0])
    state = AdamState()
    for _ in range(200):
        adam_step([w], [2 * w], state, lr=0.1)
    assert abs(w[0]) < 1e-2


def test_adam_class_steps_tensors():
    p = Parameter(np.array([1.0, 2.0]))
    opt = Adam([p], lr=0.1)
    F.mul_sum(p, np.ones(2)).backward()
    opt.step()
    np.testing.assert_allclose(p.data, [0.9, 1.9], rtol=1e-6)


# ---------------------------------------------------------------- checkpoint

def _ckpt(enc):
    return Checkpoint(enc.state_dict(), enc.cfg.to_dict(), {"epoch": 3, "seed": 1, "loss": [0.7, 0.5]})


def test_checkpoint_round_trip_bit_exact(tmp_path):
    enc = ResNetEncoder(profile("compact"), np.random.default_rng(10))
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, _ckpt(enc))
    back = load_checkpoint(path)
    assert back.meta == {"epoch": 3, "seed": 1, "loss": [0.7, 0.5]}
    for k, v in enc.state_dict().items():
        assert back.tensors[k].tobytes() == v.tobytes()
    assert checkpoint_bytes(back) == path.read_bytes()

    other = ResNetEncoder(profile("compact"), np.random.default_rng(99))
    other.load_state_dict(back.tensors)
    x = np.random.default_rng(11).normal(size=(2, 32, 32)).astype(np.float32)
    enc.eval(), other.eval()
    assert np.array_equal(enc(x).data, other(x).data)


def test_checkpoint_truncated_raises(tmp_path):
    enc = ResNetEncoder(profile("compact"))
    data = checkpoint_bytes(_ckpt(enc))
    for cut in (1, 100, len(data) // 2, len(data) - 5):
        with pytest.raises(ChecksumMismatch):
            parse_checkpoint(data[:cut])
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 0x01
    with pytest.raises(ChecksumMismatch):
        parse_checkpoint(bytes(flipped))


def test_checkpoint_profile_mismatch(tmp_path):
    compact = ResNetEncoder(profile("compact"))
    full = ResNetEncoder(profile("full"))
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, _ckpt(compact))
    back = load_checkpoint(path)
    shapes = {k: v.shape for k, v in full.state_dict().items()}
    with pytest.raises(ConfigMismatch):
        check_compatible(back, full.cfg.to_dict(), shapes)
    check_compatible(back, compact.cfg.to_dict(), {k: v.shape for k, v in compact.state_dict().items()})


def test_module_registry_names_unique():
    enc = ResNetEncoder(profile("full"))
    names = [k for k, _ in enc.named_parameters()] + [k for k, _ in enc.named_buffers()]
    assert len(names) == len(set(names))
    assert isinstance(enc, Module)
