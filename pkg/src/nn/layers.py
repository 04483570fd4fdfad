"""Trainable layers."""

from typing import Sequence, Union

import numpy as np

from ..models.schemas import MLPSpec
from ..tensor import Tensor, ops
from . import functional as F
from .module import Module, Param


class Linear(Module):
    """``y = x W^T + b`` over the last axis."""

    def __init__(self, in_dim: int, out_dim: int, bias: bool = True):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Param((out_dim, in_dim), init="he_uniform", fan_in=in_dim)
        self.bias = Param((out_dim,), init="zeros") if bias else None

    def forward(self, x) -> Tensor:
        return F.linear(x, self.weight.value, self.bias.value if self.bias is not None else None)


class MLP(Module):
    """linear -> relu -> linear."""

    def __init__(self, spec: MLPSpec):
        super().__init__()
        self.spec = spec
        self.fc1 = Linear(spec.in_dim, spec.hidden_dim, bias=spec.bias)
        self.fc2 = Linear(spec.hidden_dim, spec.out_dim, bias=spec.bias)

    def forward(self, x) -> Tensor:
        return self.fc2(ops.relu(self.fc1(x)))


def mlp_forward(mlp: MLP, x) -> Tensor:
    return mlp(x)


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride=1, pad=0, bias: bool = True):
        super().__init__()
        self.stride = stride
        self.pad = pad
        self.weight = Param((out_ch, in_ch, kernel, kernel), init="he_uniform", fan_in=in_ch * kernel * kernel)
        self.bias = Param((out_ch,), init="zeros") if bias else None

    def forward(self, x) -> Tensor:
        return F.conv2d(x, self.weight.value, self.bias.value if self.bias is not None else None,
                        self.stride, self.pad)


class Conv3d(Module):
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: Union[int, Sequence[int]],
        stride=1,
        pad=0,
        bias: bool = True,
    ):
        super().__init__()
        kernel = (kernel,) * 3 if isinstance(kernel, int) else tuple(kernel)
        self.stride = stride
        self.pad = pad
        self.weight = Param((out_ch, in_ch) + kernel, init="he_uniform", fan_in=in_ch * int(np.prod(kernel)))
        self.bias = Param((out_ch,), init="zeros") if bias else None

    def forward(self, x) -> Tensor:
        return F.conv3d(x, self.weight.value, self.bias.value if self.bias is not None else None,
                        self.stride, self.pad)


class BatchNorm(Module):
    """Batch normalization over channel axis 1 with running statistics."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Param((channels,), init="ones")
        self.beta = Param((channels,), init="zeros")
        self.running_mean = Param((channels,), init="zeros", grad_tracked=False)
        self.running_var = Param((channels,), init="ones", grad_tracked=False)

    def forward(self, x) -> Tensor:
        return F.batchnorm(
            x,
            self.gamma.value,
            self.beta.value,
            self.running_mean.value.data,
            self.running_var.value.data,
            self.training,
            self.momentum,
            self.eps,
        )
