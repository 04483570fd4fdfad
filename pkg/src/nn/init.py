"""Deterministic parameter initialization."""

from typing import Dict

import numpy as np

from .module import Module, Param


def he_uniform_bound(fan_in: int) -> float:
    return float(np.sqrt(6.0 / fan_in))


def init_params(model: Module, seed: int) -> Dict[str, Param]:
    """He-uniform weights, zero biases, unit gammas; identical for identical seeds.

    Parameters are drawn in registration order from one generator, so the
    result depends only on the architecture and ``seed``.
    """
    rng = np.random.default_rng(seed)
    registry = model.state()
    for param in registry.values():
        data = param.value.data
        if param.init == "he_uniform":
            bound = he_uniform_bound(param.fan_in)
            data[...] = rng.uniform(-bound, bound, size=data.shape)
        elif param.init == "ones":
            data[...] = 1.0
        else:
            data[...] = 0.0
    return registry
