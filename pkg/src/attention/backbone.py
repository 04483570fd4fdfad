"""Reduced 3D residual network with an attention slot in every residual block."""

from typing import List, Optional, Sequence, Tuple

from ..core.errors import ShapeMismatchError
from ..models.schemas import ModelConfig, TabAttentionConfig
from ..nn import BatchNorm, Conv3d, Linear, Module, ModuleList, Param
from ..tensor import Tensor, as_tensor, ops
from .tabattention import TabAttention


STEM_WIDTH = 8


def downsample(extent: int) -> int:
    """Spatial extent after a k=3, pad=1, stride=2 convolution."""
    return (extent - 1) // 2 + 1


def stage_geometry(config: ModelConfig) -> List[Tuple[int, int, int, int]]:
    """``(C, T, H, W)`` of the feature map inside each stage's block."""
    h, w = (downsample(e) for e in config.input_size)
    geometry = []
    for index, width in enumerate(config.widths):
        if index > 0:
            h, w = downsample(h), downsample(w)
        geometry.append((width, config.frames, h, w))
    return geometry


def attention_config(config: ModelConfig, stage: int) -> TabAttentionConfig:
    c, t, h, w = stage_geometry(config)[stage]
    return TabAttentionConfig(
        C=c, T=t, H=h, W=w, D=config.tab_dim,
        z=config.z, heads=config.heads, d=config.d, sam_kernel=config.sam_kernel,
        use_cam=config.use_cam, use_sam=config.use_sam,
        use_tam=config.use_tam, use_tab=config.use_tab,
    )


class TabAttentionSlot(Module):
    """Applies TabAttention to the ``[N, T, C, H, W]`` view of a ``[N, C, T, H, W]`` map."""

    def __init__(self, cfg: TabAttentionConfig):
        super().__init__()
        self.attention = TabAttention(cfg)

    def forward(self, x: Tensor, tab: Optional[Tensor] = None) -> Tensor:
        refined = self.attention(ops.permute(x, (0, 2, 1, 3, 4)), tab)
        return ops.permute(refined, (0, 2, 1, 3, 4))


class ResidualBlock(Module):
    """conv -> BN -> ReLU -> slot -> conv -> BN -> (+ skip) -> ReLU.

    ``slot`` is any module taking ``(features, tab)``; the skip path is a
    1x1x1 convolution with BN whenever the block changes shape.
    """

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1, slot: Optional[Module] = None):
        super().__init__()
        spatial_stride = (1, stride, stride)
        self.conv1 = Conv3d(in_ch, out_ch, 3, stride=spatial_stride, pad=1, bias=False)
        self.bn1 = BatchNorm(out_ch)
        self.slot = slot
        self.conv2 = Conv3d(out_ch, out_ch, 3, stride=1, pad=1, bias=False)
        self.bn2 = BatchNorm(out_ch)
        if in_ch != out_ch or stride != 1:
            self.proj = Conv3d(in_ch, out_ch, 1, stride=spatial_stride, pad=0, bias=False)
            self.proj_bn = BatchNorm(out_ch)
        else:
            self.proj = None
            self.proj_bn = None

    def forward(self, x: Tensor, tab: Optional[Tensor] = None) -> Tensor:
        out = ops.relu(self.bn1(self.conv1(x)))
        if self.slot is not None:
            out = self.slot(out, tab)
        out = self.bn2(self.conv2(out))
        skip = x if self.proj is None else self.proj_bn(self.proj(x))
        return ops.relu(out + skip)


class RegressionHead(Module):
    """Linear map from pooled features to one value per sample."""

    def __init__(self, features: int):
        super().__init__()
        self.fc = Linear(features, 1)

    def forward(self, pooled: Tensor, tab: Optional[Tensor] = None) -> Tensor:
        return ops.reshape(self.fc(pooled), (pooled.shape[0],))


class RegressionModel(Module):
    """Stem, residual stages, global average pool and head.

    Fusion variants plug in through ``slots`` (one per stage, inside the
    block), ``gates`` (applied after each stage) and ``head``. The head
    output is mapped to target units by the ``target_mean`` and
    ``target_std`` buffers.
    """

    def __init__(
        self,
        config: ModelConfig,
        slots: Optional[Sequence[Optional[Module]]] = None,
        gates: Optional[Sequence[Module]] = None,
        head: Optional[Module] = None,
    ):
        super().__init__()
        self.config = config
        slots = list(slots) if slots is not None else [None] * config.stages
        if len(slots) != config.stages:
            raise ShapeMismatchError("model", (config.stages,), (len(slots),), reason="One slot per stage.")
        self.stem = Conv3d(1, STEM_WIDTH, 3, stride=(1, 2, 2), pad=1, bias=False)
        self.stem_bn = BatchNorm(STEM_WIDTH)
        self.stages = ModuleList()
        in_ch = STEM_WIDTH
        for index, width in enumerate(config.widths):
            stride = 1 if index == 0 else 2
            self.stages.append(ResidualBlock(in_ch, width, stride, slots[index]))
            in_ch = width
        self.gates = ModuleList(gates) if gates is not None else None
        self.head = head if head is not None else RegressionHead(in_ch)
        self.target_mean = Param((1,), init="zeros", grad_tracked=False)
        self.target_std = Param((1,), init="ones", grad_tracked=False)

    def set_target_scale(self, mean: float, std: float) -> None:
        self.target_mean.value.data[...] = mean
        self.target_std.value.data[...] = std

    def forward(self, video, tab=None) -> Tensor:
        video = as_tensor(video)
        expected = (1, self.config.frames) + tuple(self.config.input_size)
        if video.rank != 5 or video.shape[1:] != expected:
            raise ShapeMismatchError("model", video.shape, (None,) + expected)
        x = ops.relu(self.stem_bn(self.stem(video)))
        for index, block in enumerate(self.stages):
            x = block(x, tab)
            if self.gates is not None:
                x = self.gates[index](x, tab)
        pooled = ops.mean(x, axes=(2, 3, 4))
        out = self.head(pooled, tab)
        return out * self.target_std.value + self.target_mean.value


def resblock_forward(block: ResidualBlock, x, tab=None) -> Tensor:
    return block(as_tensor(x), tab)


def backbone_forward(model: RegressionModel, video, tab=None) -> Tensor:
    """One prediction per sample, ``[N]``."""
    return model(video, tab)
