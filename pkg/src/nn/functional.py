"""Differentiable layer primitives: linear, convolution, batch normalization."""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import DegenerateBatchError, InvalidGeometryError, ShapeMismatchError
from ..tensor import Tensor, as_tensor, emit


IntOrTuple = Union[int, Sequence[int]]


def linear(x, w, b=None) -> Tensor:
    """Affine map over the last axis: ``x @ w.T + b``."""
    x, w = as_tensor(x), as_tensor(w)
    if w.rank != 2 or x.shape[-1] != w.shape[1]:
        raise ShapeMismatchError("linear", x.shape, w.shape)
    inputs = [x, w]
    out = x.data @ w.data.T
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[0],):
            raise ShapeMismatchError("linear", w.shape, b.shape, reason="Bias must be [out].")
        inputs.append(b)
        out = out + b.data
    x_data, w_data = x.data, w.data

    def backward(g):
        g2 = g.reshape(-1, w_data.shape[0])
        x2 = x_data.reshape(-1, w_data.shape[1])
        grads = [g @ w_data, g2.T @ x2]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return emit("linear", inputs, out, backward)


def _expand(value: IntOrTuple, nd: int, name: str) -> Tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        return (int(value),) * nd
    value = tuple(int(v) for v in value)
    if len(value) != nd:
        raise InvalidGeometryError(f"{name} needs {nd} entries, got {value}.")
    return value


def _conv(op: str, nd: int, x, w, b, stride: IntOrTuple, pad: IntOrTuple) -> Tensor:
    """N-d cross-correlation with zero padding, accumulated per kernel offset.

    Output extents are floor((n + 2p - k) / s) + 1; trailing input rows a stride skips are ignored.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.rank != nd + 2 or w.rank != nd + 2:
        raise ShapeMismatchError(op, x.shape, w.shape, reason=f"Expected rank-{nd + 2} input and weight.")
    if x.shape[1] != w.shape[1]:
        raise ShapeMismatchError(op, x.shape, w.shape, reason="Input channels differ.")
    stride = _expand(stride, nd, "stride")
    pad = _expand(pad, nd, "pad")
    kernel = w.shape[2:]
    if any(k % 2 == 0 for k in kernel):
        raise InvalidGeometryError(f"Kernel {kernel} must have odd extents.", {"kernel": list(kernel)})
    if any(s < 1 for s in stride) or any(p < 0 for p in pad):
        raise InvalidGeometryError("Stride must be >= 1 and padding >= 0.")

    spatial = x.shape[2:]
    out_size = tuple((n + 2 * p - k) // s + 1 for n, p, k, s in zip(spatial, pad, kernel, stride))
    if any(n + 2 * p < k for n, p, k in zip(spatial, pad, kernel)):
        raise InvalidGeometryError(
            f"Kernel {kernel} does not fit input {spatial} with padding {pad}.",
            {"input": list(spatial), "kernel": list(kernel), "pad": list(pad)},
        )

    x_pad = np.pad(x.data, [(0, 0), (0, 0)] + [(p, p) for p in pad])
    w_data = w.data
    lead = (np.s_[:], np.s_[:])
    windows = []
    for offset in np.ndindex(*kernel):
        window = tuple(
            np.s_[o:o + s * (n - 1) + 1:s] for o, s, n in zip(offset, stride, out_size)
        )
        windows.append((offset, lead + window))

    out = np.zeros((x.shape[0], w.shape[0]) + out_size)
    for offset, window in windows:
        patch = x_pad[window]
        out += np.moveaxis(np.tensordot(patch, w_data[lead + offset], axes=([1], [1])), -1, 1)

    inputs = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[0],):
            raise ShapeMismatchError(op, w.shape, b.shape, reason="Bias must be [Cout].")
        inputs.append(b)
        out += b.data.reshape((1, -1) + (1,) * nd)

    spatial_axes = tuple(range(2, nd + 2))
    unpad = lead + tuple(np.s_[p:p + n] for p, n in zip(pad, spatial))

    def backward(g):
        grad_x = np.zeros_like(x_pad)
        grad_w = np.zeros_like(w_data)
        sum_axes = (0,) + spatial_axes
        for offset, window in windows:
            patch = x_pad[window]
            grad_w[lead + offset] = np.tensordot(g, patch, axes=(sum_axes, sum_axes))
            grad_x[window] += np.moveaxis(np.tensordot(g, w_data[lead + offset], axes=([1], [0])), -1, 1)
        grads = [grad_x[unpad], grad_w]
        if b is not None:
            grads.append(g.sum(axis=sum_axes))
        return grads

    return emit(op, inputs, out, backward)


def conv2d(x, w, b=None, stride: IntOrTuple = 1, pad: IntOrTuple = 0) -> Tensor:
    """[N,Cin,H,W] * [Cout,Cin,kh,kw] -> [N,Cout,H',W']."""
    return _conv("conv2d", 2, x, w, b, stride, pad)


def conv3d(x, w, b=None, stride: IntOrTuple = 1, pad: IntOrTuple = 0) -> Tensor:
    """[N,Cin,T,H,W] * [Cout,Cin,kt,kh,kw] -> [N,Cout,T',H',W']."""
    return _conv("conv3d", 3, x, w, b, stride, pad)


def batchnorm(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over every axis except 1.

    Train mode normalizes with the (biased) batch statistics and updates the
    running estimates in place; eval mode uses the running estimates.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.rank < 2:
        raise ShapeMismatchError("batchnorm", x.shape, reason="Expected [N,C,...].")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeMismatchError("batchnorm", x.shape, gamma.shape, beta.shape)
    axes = (0,) + tuple(range(2, x.rank))
    bshape = (1, channels) + (1,) * (x.rank - 2)
    count = x.size // channels
    x_data = x.data

    if training:
        if count < 2:
            raise DegenerateBatchError(count)
        mu = x_data.mean(axis=axes)
        var = x_data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * count / (count - 1)
    else:
        mu = running_mean.copy()
        var = running_var.copy()

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x_data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.data.reshape(bshape) * x_hat + beta.data.reshape(bshape)
    gamma_data = gamma.data

    def backward(g):
        grad_gamma = (g * x_hat).sum(axis=axes)
        grad_beta = g.sum(axis=axes)
        g_hat = g * gamma_data.reshape(bshape)
        if training:
            grad_x = (inv_std.reshape(bshape) / count) * (
                count * g_hat
                - g_hat.sum(axis=axes, keepdims=True)
                - x_hat * (g_hat * x_hat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_x = g_hat * inv_std.reshape(bshape)
        return grad_x, grad_gamma, grad_beta

    return emit("batchnorm", (x, gamma, beta), out, backward)
