"""Tabular-conditioned attention and the residual backbone it plugs into."""

from .tabattention import (
    AttentionMaps,
    ChannelAttention,
    MultiHeadSelfAttention,
    SpatialAttention,
    TabAttention,
    TemporalAttention,
    cam_forward,
    mhsa_forward,
    sam_forward,
    tabattention_forward,
    tam_forward,
)
from .backbone import (
    RegressionHead,
    RegressionModel,
    ResidualBlock,
    TabAttentionSlot,
    attention_config,
    backbone_forward,
    resblock_forward,
    stage_geometry,
)

__all__ = [
    "AttentionMaps",
    "ChannelAttention",
    "MultiHeadSelfAttention",
    "RegressionHead",
    "RegressionModel",
    "ResidualBlock",
    "SpatialAttention",
    "TabAttention",
    "TabAttentionSlot",
    "TemporalAttention",
    "attention_config",
    "backbone_forward",
    "cam_forward",
    "mhsa_forward",
    "resblock_forward",
    "sam_forward",
    "stage_geometry",
    "tabattention_forward",
    "tam_forward",
]
