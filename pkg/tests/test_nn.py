"""
Layer, initialization and checkpoint tests.

To run: pytest tests/test_nn.py
"""

import numpy as np
import pytest

from src.core.errors import (
    CorruptFileError,
    DegenerateBatchError,
    InvalidGeometryError,
    ShapeMismatchError,
)
from src.models.schemas import MLPSpec
from src.nn import (
    MLP,
    BatchNorm,
    Conv2d,
    Conv3d,
    Linear,
    Module,
    functional as F,
    he_uniform_bound,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from src.nn.checkpoint import decode_state, encode_state
from src.tensor import Tape, Tensor, ops


def _conv2d_oracle(x, w, b, stride, pad):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, [(0, 0), (0, 0), (pad, pad), (pad, pad)])
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, cout, oh, ow))
    for i in range(n):
        for o in range(cout):
            for r in range(oh):
                for c in range(ow):
                    patch = xp[i, :, r * stride:r * stride + kh, c * stride:c * stride + kw]
                    out[i, o, r, c] = np.sum(patch * w[o]) + b[o]
    return out


def test_linear_matches_affine_map(rng):
    """Linear computes x W^T + b over the last axis."""
    layer = Linear(4, 3)
    init_params(layer, seed=0)
    layer.bias.value.data[...] = [0.1, -0.2, 0.3]
    x = rng.standard_normal((2, 5, 4))
    expected = x @ layer.weight.value.data.T + layer.bias.value.data
    np.testing.assert_allclose(layer(x).data, expected, atol=1e-12)


def test_linear_rejects_wrong_width():
    """Input width must equal the weight's input dimension."""
    with pytest.raises(ShapeMismatchError):
        Linear(4, 3)(np.ones((2, 5)))


def test_mlp_is_linear_relu_linear(rng):
    """MLP applies relu between its two linear layers."""
    mlp = MLP(MLPSpec(in_dim=3, hidden_dim=5, out_dim=2))
    init_params(mlp, seed=1)
    x = rng.standard_normal((4, 3))
    hidden = np.maximum(x @ mlp.fc1.weight.value.data.T, 0.0)
    np.testing.assert_allclose(mlp(x).data, hidden @ mlp.fc2.weight.value.data.T, atol=1e-12)


def test_mlp_rejects_other_activations():
    """Only relu hidden layers are supported."""
    with pytest.raises(ValueError):
        MLPSpec(in_dim=1, hidden_dim=1, out_dim=1, hidden_activation="tanh")


def _conv3d_oracle(x, w, b, stride, pad):
    n, cin, d, h, wd = x.shape
    cout, _, kd, kh, kw = w.shape
    sd, sh, sw = stride
    xp = np.pad(x, [(0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)])
    od = (d + 2 * pad - kd) // sd + 1
    oh = (h + 2 * pad - kh) // sh + 1
    ow = (wd + 2 * pad - kw) // sw + 1
    out = np.zeros((n, cout, od, oh, ow))
    for i in range(n):
        for o in range(cout):
            for t in range(od):
                for r in range(oh):
                    for c in range(ow):
                        patch = xp[i, :, t * sd:t * sd + kd, r * sh:r * sh + kh, c * sw:c * sw + kw]
                        out[i, o, t, r, c] = np.sum(patch * w[o]) + b[o]
    return out


@pytest.mark.parametrize("seed", range(20))
def test_conv2d_matches_loop_oracle(seed):
    """conv2d equals a direct cross-correlation loop on random geometries."""
    rng = np.random.default_rng(seed)
    k = int(rng.choice([1, 3, 5]))
    stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, k // 2 + 1))
    cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    x = rng.standard_normal((int(rng.integers(1, 3)), cin, int(rng.integers(k, 9)), int(rng.integers(k, 9))))
    w = rng.standard_normal((cout, cin, k, k))
    b = rng.standard_normal(cout)
    out = F.conv2d(x, w, b, stride=stride, pad=pad).data
    np.testing.assert_allclose(out, _conv2d_oracle(x, w, b, stride, pad), atol=1e-10)


def test_conv3d_cube_kernel_matches_loop_oracle(rng):
    """A 3x3x3 kernel on a 4x6x6 volume with stride (1, 2, 2) and padding 1."""
    x = rng.standard_normal((2, 2, 4, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3, 3))
    b = rng.standard_normal(3)
    out = F.conv3d(x, w, b, stride=(1, 2, 2), pad=1).data
    assert out.shape == (2, 3, 4, 3, 3)
    np.testing.assert_allclose(out, _conv3d_oracle(x, w, b, (1, 2, 2), 1), atol=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_conv3d_matches_loop_oracle(seed):
    """conv3d equals a direct loop over frames, rows and columns on random geometries."""
    rng = np.random.default_rng(seed)
    k = int(rng.choice([1, 3]))
    stride = (1, int(rng.integers(1, 3)), int(rng.integers(1, 3)))
    pad = int(rng.integers(0, k // 2 + 1))
    cin, cout = int(rng.integers(1, 3)), int(rng.integers(1, 4))
    shape = (int(rng.integers(1, 3)), cin, int(rng.integers(k, 5)), int(rng.integers(k, 7)), int(rng.integers(k, 7)))
    x = rng.standard_normal(shape)
    w = rng.standard_normal((cout, cin, k, k, k))
    b = rng.standard_normal(cout)
    out = F.conv3d(x, w, b, stride=stride, pad=pad).data
    np.testing.assert_allclose(out, _conv3d_oracle(x, w, b, stride, pad), atol=1e-10)


def test_conv3d_with_unit_depth_kernel_is_framewise_conv2d(rng):
    """A kernel of depth one convolves every frame independently."""
    x = rng.standard_normal((1, 2, 3, 5, 5))
    w = rng.standard_normal((3, 2, 1, 3, 3))
    out = F.conv3d(x, w, stride=1, pad=(0, 1, 1)).data
    for t in range(3):
        frame = _conv2d_oracle(x[:, :, t], w[:, :, 0], np.zeros(3), 1, 1)
        np.testing.assert_allclose(out[:, :, t], frame, atol=1e-10)


def test_conv3d_output_geometry():
    """Output extents follow floor((n + 2p - k) / s) + 1."""
    layer = Conv3d(1, 4, 3, stride=(1, 2, 2), pad=1, bias=False)
    assert layer(np.zeros((2, 1, 5, 9, 8))).shape == (2, 4, 5, 5, 4)
    assert Conv2d(2, 1, 5, pad=2)(np.zeros((1, 2, 6, 6))).shape == (1, 1, 6, 6)


def test_conv_rejects_even_kernel_and_oversized_kernel():
    """Even kernels and kernels larger than the padded input are invalid."""
    with pytest.raises(InvalidGeometryError):
        F.conv2d(np.zeros((1, 1, 5, 5)), np.zeros((1, 1, 2, 2)))
    with pytest.raises(InvalidGeometryError):
        F.conv2d(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 5, 5)))
    with pytest.raises(ShapeMismatchError):
        F.conv2d(np.zeros((1, 2, 5, 5)), np.zeros((1, 1, 3, 3)))


def test_batchnorm_train_normalizes_and_updates_running_stats(rng):
    """Train mode normalizes per channel and moves the running estimates."""
    bn = BatchNorm(3)
    init_params(bn, seed=0)
    x = rng.standard_normal((4, 3, 2, 5)) * 3.0 + 2.0
    out = bn(x).data
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), np.zeros(3), atol=1e-10)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), np.ones(3), atol=1e-3)

    count = 4 * 2 * 5
    mu = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3)) * count / (count - 1)
    np.testing.assert_allclose(bn.running_mean.value.data, 0.1 * mu)
    np.testing.assert_allclose(bn.running_var.value.data, 0.9 + 0.1 * var)


def test_batchnorm_eval_uses_running_stats(rng):
    """Eval mode is an affine map fixed by the running statistics."""
    bn = BatchNorm(2)
    init_params(bn, seed=0)
    bn.running_mean.value.data[...] = [1.0, -1.0]
    bn.running_var.value.data[...] = [4.0, 0.25]
    bn.eval()
    x = rng.standard_normal((1, 2, 3))
    expected = (x - np.array([1.0, -1.0]).reshape(1, 2, 1)) / np.sqrt(
        np.array([4.0, 0.25]).reshape(1, 2, 1) + 1e-5
    )
    np.testing.assert_allclose(bn(x).data, expected, atol=1e-12)
    np.testing.assert_array_equal(bn.running_mean.value.data, [1.0, -1.0])


def test_batchnorm_needs_two_values_per_channel():
    """A single value per channel cannot be normalized in train mode."""
    bn = BatchNorm(2)
    init_params(bn, seed=0)
    with pytest.raises(DegenerateBatchError):
        bn(np.ones((1, 2)))


def test_buffers_are_not_trainable():
    """Running statistics are in the state but not in the parameters."""
    bn = BatchNorm(2)
    assert [n for n, _ in bn.named_parameters()] == ["gamma", "beta"]
    assert list(bn.state()) == ["gamma", "beta", "running_mean", "running_var"]


def test_gradients_flow_through_conv_and_batchnorm(rng):
    """Every parameter of a conv + batchnorm stack receives a gradient."""
    conv, bn = Conv2d(2, 3, 3, pad=1), BatchNorm(3)
    init_params(conv, seed=0)
    init_params(bn, seed=1)
    params = [p.value for p in conv.parameters() + bn.parameters()]
    with Tape() as tape:
        tape.watch_all(params)
        loss = ops.sum(ops.mul(bn(conv(rng.standard_normal((2, 2, 4, 4)))), rng.standard_normal((2, 3, 4, 4))))
        grads = tape.backward(loss)
    for value in params:
        assert value in grads
        assert grads.of(value).shape == value.shape


def test_init_is_deterministic_and_bounded():
    """Same seed gives identical weights; weights stay within the He bound."""
    first, second = Conv3d(2, 4, 3), Conv3d(2, 4, 3)
    init_params(first, seed=7)
    init_params(second, seed=7)
    np.testing.assert_array_equal(first.weight.value.data, second.weight.value.data)
    bound = he_uniform_bound(2 * 27)
    assert np.all(np.abs(first.weight.value.data) <= bound)
    assert np.all(first.bias.value.data == 0.0)

    init_params(second, seed=8)
    assert not np.array_equal(first.weight.value.data, second.weight.value.data)


class _Pair(Module):
    def __init__(self):
        super().__init__()
        self.conv = Conv2d(1, 2, 3, pad=1)
        self.bn = BatchNorm(2)


def test_checkpoint_round_trip_restores_parameters_and_buffers(tmp_path):
    """Loading a checkpoint reproduces every parameter and buffer bit for bit."""
    source = _Pair()
    init_params(source, seed=3)
    source.bn.running_mean.value.data[...] = [0.5, -0.5]
    path = tmp_path / "model.ckpt"
    save_checkpoint(source, path)

    target = _Pair()
    init_params(target, seed=4)
    load_checkpoint(target, path)
    for name, param in source.state().items():
        assert target.state()[name].value.data.tobytes() == param.value.data.tobytes()


def test_checkpoint_rejects_mismatched_architecture(tmp_path):
    """Names and shapes must match the receiving model."""
    path = tmp_path / "linear.ckpt"
    save_checkpoint(Linear(3, 2), path)
    with pytest.raises(CorruptFileError):
        load_checkpoint(_Pair(), path)
    with pytest.raises(ShapeMismatchError):
        load_checkpoint(Linear(4, 2), path)


def test_checkpoint_decoder_rejects_damaged_bytes():
    """Truncated or padded checkpoints are reported as corrupt."""
    buffer = encode_state({"w": Tensor(np.ones((2, 2)))})
    assert list(decode_state(buffer)) == ["w"]
    with pytest.raises(CorruptFileError):
        decode_state(buffer[:10])
    with pytest.raises(CorruptFileError):
        decode_state(buffer + b"\x01")
    with pytest.raises(CorruptFileError):
        decode_state(b"NOTACKPT" + buffer[8:])
