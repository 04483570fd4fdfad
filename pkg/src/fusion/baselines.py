"""Tabular-only regression and the imaging+tabular fusion baselines."""

import numpy as np

from ..core.errors import ShapeMismatchError, SingularSystemError
from ..models.schemas import MLPSpec
from ..nn import Linear, MLP, Module
from ..tensor import Tensor, as_tensor, ops


MAX_CONDITION = 1e12


def _design(X) -> np.ndarray:
    X = np.asarray(X.data if isinstance(X, Tensor) else X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatchError("linreg", X.shape, reason="Expected an [n, D] matrix.")
    return np.hstack([np.ones((X.shape[0], 1)), X])


def linreg_fit(X, y, ridge: float = 1e-8) -> np.ndarray:
    """Ridge regression via the normal equations.

    Returns ``[intercept, w_1, ..., w_D]``; the intercept is not penalized.
    """
    design = _design(X)
    y = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=np.float64).reshape(-1)
    if y.shape[0] != design.shape[0]:
        raise ShapeMismatchError("linreg", design.shape, y.shape)
    penalty = np.eye(design.shape[1]) * ridge
    penalty[0, 0] = 0.0
    gram = design.T @ design + penalty
    condition = float(np.linalg.cond(gram))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SingularSystemError(condition)
    return np.linalg.solve(gram, design.T @ y)


def linreg_predict(weights: np.ndarray, X) -> np.ndarray:
    design = _design(X)
    if design.shape[1] != weights.shape[0]:
        raise ShapeMismatchError("linreg", design.shape, weights.shape)
    return design @ weights


class InteractiveFusion(Module):
    """Channel-wise multiplicative gate driven by the tabular branch."""

    def __init__(self, channels: int, tab_dim: int):
        super().__init__()
        self.channels = channels
        self.gate = MLP(MLPSpec(in_dim=tab_dim, hidden_dim=channels, out_dim=channels))

    def forward(self, fmap: Tensor, tab: Tensor) -> Tensor:
        return interactive_fuse(fmap, tab, self)


class DaftFusion(Module):
    """Tabular-conditioned per-channel scale and shift."""

    def __init__(self, channels: int, tab_dim: int):
        super().__init__()
        self.channels = channels
        self.film = MLP(MLPSpec(in_dim=tab_dim, hidden_dim=channels, out_dim=2 * channels))

    def forward(self, fmap: Tensor, tab: Tensor) -> Tensor:
        return daft_fuse(fmap, tab, self)


class LateConcatHead(Module):
    """Linear head over ``[pooled image features, tabular features]``."""

    def __init__(self, features: int, tab_dim: int):
        super().__init__()
        self.fc = Linear(features + tab_dim, 1)

    def forward(self, pooled: Tensor, tab: Tensor) -> Tensor:
        return late_concat_head(pooled, tab, self)


def _channel_view(fmap: Tensor, values: Tensor, op: str) -> Tensor:
    n, c = fmap.shape[:2]
    if values.shape != (n, c):
        raise ShapeMismatchError(op, fmap.shape, values.shape, reason="Expected one value per channel.")
    return ops.reshape(values, (n, c) + (1,) * (fmap.rank - 2))


def interactive_fuse(fmap, tab, module: InteractiveFusion) -> Tensor:
    """``fmap * gate(tab)`` broadcast over every non-channel axis."""
    fmap = as_tensor(fmap)
    gate = module.gate(as_tensor(tab))
    return fmap * _channel_view(fmap, gate, "interactive")


def daft_fuse(fmap, tab, module: DaftFusion) -> Tensor:
    """``(1 + gamma) * fmap + beta`` with ``gamma, beta`` from the tabular MLP."""
    fmap = as_tensor(fmap)
    c = module.channels
    params = module.film(as_tensor(tab))
    gamma = _channel_view(fmap, ops.slice(params, [None, (0, c)]), "daft")
    beta = _channel_view(fmap, ops.slice(params, [None, (c, 2 * c)]), "daft")
    return fmap * (gamma + 1.0) + beta


def late_concat_head(pooled, tab, module: LateConcatHead) -> Tensor:
    pooled, tab = as_tensor(pooled), as_tensor(tab)
    if pooled.rank != 2 or tab.rank != 2 or pooled.shape[0] != tab.shape[0]:
        raise ShapeMismatchError("late_concat", pooled.shape, tab.shape)
    out = module.fc(ops.concat([pooled, tab], axis=1))
    return ops.reshape(out, (pooled.shape[0],))
