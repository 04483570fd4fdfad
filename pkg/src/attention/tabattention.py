"""Channel, spatial and temporal attention conditioned on tabular embeddings.

All modules work on batched temporal feature maps laid out as
``[N, T, C, H, W]`` with a tabular batch ``[N, D]``. The ``*_forward``
helpers accept a single ``[T, C, H, W]`` sample and a ``[D]`` vector.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..core.errors import ShapeMismatchError
from ..models.schemas import MLPSpec, TabAttentionConfig, hidden_size
from ..nn import Conv2d, Linear, MLP, Module, ModuleList, Param
from ..tensor import Tensor, as_tensor, ops


def _mlp(in_dim: int, hidden: float, out_dim: int) -> MLP:
    return MLP(MLPSpec(in_dim=in_dim, hidden_dim=hidden_size(hidden), out_dim=out_dim))


def _check_tab(op: str, tab, n: int, dim: int) -> Tensor:
    if tab is None:
        raise ShapeMismatchError(op, (n, dim), reason="Tabular input is required.")
    tab = as_tensor(tab)
    if tab.shape != (n, dim):
        raise ShapeMismatchError(op, (n, dim), tab.shape, reason="Expected a tabular batch [N, D].")
    return tab


class ChannelAttention(Module):
    """Per-frame channel attention ``m_c`` of shape ``[N, T, C, 1, 1]``.

    The channel MLP (C -> C/z -> C) is shared by the max, avg and tabular
    descriptors and by all frames; the tabular term is computed once per sample.
    """

    def __init__(self, cfg: TabAttentionConfig):
        super().__init__()
        self.cfg = cfg
        self.shared = _mlp(cfg.C, cfg.C / cfg.z, cfg.C)
        self.embed = _mlp(cfg.D, cfg.C / cfg.z, cfg.C) if cfg.use_tab else None

    def forward(self, x: Tensor, tab: Optional[Tensor] = None) -> Tensor:
        n, t, c, h, w = x.shape
        if c != self.cfg.C:
            raise ShapeMismatchError("cam", x.shape, reason=f"Expected C={self.cfg.C}.")
        pooled_max = ops.reshape(ops.max(x, axes=(3, 4)), (n, t, c))
        pooled_avg = ops.reshape(ops.mean(x, axes=(3, 4)), (n, t, c))
        logits = self.shared(pooled_max) + self.shared(pooled_avg)
        if self.embed is not None:
            tab = _check_tab("cam", tab, n, self.cfg.D)
            tab_term = self.shared(self.embed(tab))
            logits = logits + ops.reshape(tab_term, (n, 1, c))
        return ops.reshape(ops.sigmoid(logits), (n, t, c, 1, 1))


class SpatialAttention(Module):
    """Per-frame spatial attention ``m_s`` of shape ``[N, T, 1, H, W]``.

    A shared 2D convolution maps ``[max_C, avg_C, embedding]`` to one logit
    map per frame; the embedding is D -> HW/2 -> HW reshaped to ``[H, W]``.
    """

    def __init__(self, cfg: TabAttentionConfig):
        super().__init__()
        self.cfg = cfg
        in_ch = 3 if cfg.use_tab else 2
        self.conv = Conv2d(in_ch, 1, cfg.sam_kernel, stride=1, pad=cfg.sam_kernel // 2)
        self.embed = _mlp(cfg.D, cfg.H * cfg.W / 2, cfg.H * cfg.W) if cfg.use_tab else None

    def forward(self, x: Tensor, tab: Optional[Tensor] = None) -> Tensor:
        n, t, c, h, w = x.shape
        if (h, w) != (self.cfg.H, self.cfg.W):
            raise ShapeMismatchError("sam", x.shape, reason=f"Expected H,W={self.cfg.H},{self.cfg.W}.")
        parts = [ops.max(x, axes=2, keepdims=True), ops.mean(x, axes=2, keepdims=True)]
        if self.embed is not None:
            tab = _check_tab("sam", tab, n, self.cfg.D)
            emb = ops.reshape(self.embed(tab), (n, 1, 1, h, w))
            parts.append(ops.broadcast_to(emb, (n, t, 1, h, w)))
        stacked = ops.reshape(ops.concat(parts, axis=2), (n * t, len(parts), h, w))
        logits = self.conv(stacked)
        return ops.reshape(ops.sigmoid(logits), (n, t, 1, h, w))


class MultiHeadSelfAttention(Module):
    """Self-attention over a ``[N, T, F]`` sequence with a learned additive key offset ``r``."""

    def __init__(self, in_dim: int, length: int, heads: int = 2, d: int = 4):
        super().__init__()
        self.heads = heads
        self.d = d
        self.query = ModuleList([Linear(in_dim, d) for _ in range(heads)])
        self.key = ModuleList([Linear(in_dim, d) for _ in range(heads)])
        self.value = ModuleList([Linear(in_dim, d) for _ in range(heads)])
        self.r = Param((length, d), init="he_uniform", fan_in=d)
        self.out = Linear(heads * d, 1)

    def forward(self, seq: Tensor, return_weights: bool = False):
        n, t, _ = seq.shape
        if t != self.r.shape[0]:
            raise ShapeMismatchError("mhsa", seq.shape, self.r.shape, reason="Sequence length differs from r.")
        scale = 1.0 / np.sqrt(self.d)
        outputs, weights = [], []
        for j in range(self.heads):
            q = self.query[j](seq)
            k = self.key[j](seq) + self.r.value
            v = self.value[j](seq)
            scores = ops.matmul(q, ops.permute(k, (0, 2, 1))) * scale
            attn = ops.softmax_lastaxis(scores)
            outputs.append(ops.matmul(attn, v))
            weights.append(attn)
        result = self.out(ops.concat(outputs, axis=2))
        if return_weights:
            return result, weights
        return result


class TemporalAttention(Module):
    """Per-frame temporal attention ``m_t`` of shape ``[N, T, 1, 1, 1]``.

    The sequence fed to self-attention has per-frame features ordered
    (max, avg, tab).
    """

    def __init__(self, cfg: TabAttentionConfig):
        super().__init__()
        self.cfg = cfg
        features = 3 if cfg.use_tab else 2
        self.mhsa = MultiHeadSelfAttention(features, cfg.T, cfg.heads, cfg.d)
        self.embed = _mlp(cfg.D, cfg.T / 2, cfg.T) if cfg.use_tab else None

    def sequence(self, x: Tensor, tab: Optional[Tensor] = None) -> Tensor:
        n, t = x.shape[:2]
        if t != self.cfg.T:
            raise ShapeMismatchError("tam", x.shape, reason=f"Expected T={self.cfg.T}.")
        parts = [
            ops.reshape(ops.max(x, axes=(2, 3, 4)), (n, t, 1)),
            ops.reshape(ops.mean(x, axes=(2, 3, 4)), (n, t, 1)),
        ]
        if self.embed is not None:
            tab = _check_tab("tam", tab, n, self.cfg.D)
            parts.append(ops.reshape(self.embed(tab), (n, t, 1)))
        return ops.concat(parts, axis=2)

    def forward(self, x: Tensor, tab: Optional[Tensor] = None) -> Tensor:
        n, t = x.shape[:2]
        logits = self.mhsa(self.sequence(x, tab))
        return ops.reshape(ops.sigmoid(logits), (n, t, 1, 1, 1))


@dataclass
class AttentionMaps:
    """Attention maps of the enabled stages; ``None`` for a skipped stage."""

    m_c: Optional[Tensor] = None
    m_s: Optional[Tensor] = None
    m_t: Optional[Tensor] = None


class TabAttention(Module):
    """Sequential channel -> spatial -> temporal refinement of ``[N, T, C, H, W]`` maps."""

    def __init__(self, cfg: TabAttentionConfig):
        super().__init__()
        self.cfg = cfg
        self.channel = ChannelAttention(cfg) if cfg.use_cam else None
        self.spatial = SpatialAttention(cfg) if cfg.use_sam else None
        self.temporal = TemporalAttention(cfg) if cfg.use_tam else None

    def forward(self, x: Tensor, tab: Optional[Tensor] = None, return_maps: bool = False):
        x = as_tensor(x)
        expected = (self.cfg.T, self.cfg.C, self.cfg.H, self.cfg.W)
        if x.rank != 5 or x.shape[1:] != expected:
            raise ShapeMismatchError("tabattention", x.shape, (None,) + expected)
        maps = AttentionMaps()
        out = x
        if self.channel is not None:
            maps.m_c = self.channel(out, tab)
            out = out * maps.m_c
        if self.spatial is not None:
            maps.m_s = self.spatial(out, tab)
            out = out * maps.m_s
        if self.temporal is not None:
            maps.m_t = self.temporal(out, tab)
            out = out * maps.m_t
        if return_maps:
            return out, maps
        return out


def _batched(sample, tab) -> Tuple[Tensor, Optional[Tensor]]:
    sample = as_tensor(sample)
    if sample.rank != 4:
        raise ShapeMismatchError("attention", sample.shape, reason="Expected one [T, C, H, W] sample.")
    batched = ops.reshape(sample, (1,) + sample.shape)
    if tab is not None:
        tab = as_tensor(tab)
        tab = ops.reshape(tab, (1, tab.size))
    return batched, tab


def cam_forward(s_prime, tab, module: ChannelAttention) -> Tensor:
    """``m_c`` for one sample: ``[T, C, 1, 1]``."""
    x, tab = _batched(s_prime, tab)
    out = module(x, tab)
    return ops.reshape(out, out.shape[1:])


def sam_forward(s_dd, tab, module: SpatialAttention) -> Tensor:
    """``m_s`` for one sample: ``[T, 1, H, W]``."""
    x, tab = _batched(s_dd, tab)
    out = module(x, tab)
    return ops.reshape(out, out.shape[1:])


def mhsa_forward(seq, module: MultiHeadSelfAttention) -> Tensor:
    """Self-attention over one ``[T, F]`` sequence: ``[T, 1]``."""
    seq = as_tensor(seq)
    if seq.rank != 2:
        raise ShapeMismatchError("mhsa", seq.shape, reason="Expected a [T, F] sequence.")
    out = module(ops.reshape(seq, (1,) + seq.shape))
    return ops.reshape(out, out.shape[1:])


def tam_forward(s_ddd, tab, module: TemporalAttention) -> Tensor:
    """``m_t`` for one sample: ``[T, 1, 1, 1]``."""
    x, tab = _batched(s_ddd, tab)
    out = module(x, tab)
    return ops.reshape(out, out.shape[1:])


def tabattention_forward(s_prime, tab, module: TabAttention) -> Tensor:
    """Refined ``[T, C, H, W]`` features for one sample."""
    x, tab = _batched(s_prime, tab)
    out = module(x, tab)
    return ops.reshape(out, out.shape[1:])
