"""Layers, parameter registry and checkpoints."""

from .module import Module, ModuleList, Param
from .layers import BatchNorm, Conv2d, Conv3d, Linear, MLP, mlp_forward
from .init import he_uniform_bound, init_params
from .checkpoint import load_checkpoint, save_checkpoint
from . import functional

__all__ = [
    "BatchNorm",
    "Conv2d",
    "Conv3d",
    "Linear",
    "MLP",
    "Module",
    "ModuleList",
    "Param",
    "functional",
    "he_uniform_bound",
    "init_params",
    "load_checkpoint",
    "mlp_forward",
    "save_checkpoint",
]
