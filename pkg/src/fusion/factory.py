"""Model construction for every fusion variant and ablation row."""

from typing import Dict, List, NamedTuple, Optional

from ..attention.backbone import RegressionModel, TabAttentionSlot, attention_config
from ..core.errors import ValidationFailedError
from ..models.schemas import ModelConfig, ModelKind
from ..nn import init_params
from .baselines import DaftFusion, InteractiveFusion, LateConcatHead


class Variant(NamedTuple):
    """A named table row: model overrides plus its modality flags."""

    name: str
    overrides: Dict[str, object]
    img: bool
    tab: bool


# Ablation rows, in report order.
ABLATION_VARIANTS: List[Variant] = [
    Variant("baseline", {"kind": ModelKind.TABATTENTION, "use_cam": False, "use_sam": False,
                         "use_tam": False, "use_tab": False}, True, False),
    Variant("+TAM", {"kind": ModelKind.TABATTENTION, "use_cam": False, "use_sam": False,
                     "use_tam": True, "use_tab": False}, True, False),
    Variant("+CBAM+Tab", {"kind": ModelKind.TABATTENTION, "use_cam": True, "use_sam": True,
                          "use_tam": False, "use_tab": True}, True, True),
    Variant("+TAM+Tab", {"kind": ModelKind.TABATTENTION, "use_cam": False, "use_sam": False,
                         "use_tam": True, "use_tab": True}, True, True),
    Variant("TabAttention", {"kind": ModelKind.TABATTENTION, "use_cam": True, "use_sam": True,
                             "use_tam": True, "use_tab": True}, True, True),
]

# Method comparison rows, in report order.
COMPARISON_VARIANTS: List[Variant] = [
    Variant("linreg", {"kind": ModelKind.TABULAR_LINREG}, False, True),
    Variant("image_only", {"kind": ModelKind.IMAGE_ONLY}, True, False),
    Variant("daft", {"kind": ModelKind.DAFT}, True, True),
    Variant("interactive", {"kind": ModelKind.INTERACTIVE}, True, True),
    Variant("late_concat", {"kind": ModelKind.LATE_CONCAT}, True, True),
    Variant("tabattention", {"kind": ModelKind.TABATTENTION, "use_cam": True, "use_sam": True,
                             "use_tam": True, "use_tab": True}, True, True),
]

KIND_ALIASES = {"linreg": ModelKind.TABULAR_LINREG}


def parse_kind(value: str) -> ModelKind:
    if value in KIND_ALIASES:
        return KIND_ALIASES[value]
    try:
        return ModelKind(value)
    except ValueError:
        raise ValidationFailedError(
            f"Unknown model kind '{value}'.",
            {"choices": [k.value for k in ModelKind] + sorted(KIND_ALIASES)},
        ) from None


def variant_config(base: ModelConfig, variant: Variant) -> ModelConfig:
    return base.model_copy(update=variant.overrides)


def build_model(config: ModelConfig, seed: Optional[int] = None) -> RegressionModel:
    """Backbone with the fusion modules of ``config.kind``; initialized when ``seed`` is given."""
    if not config.uses_imaging:
        raise ValidationFailedError(f"'{config.kind.value}' has no imaging model.")
    features = config.widths[-1]
    slots = [None] * config.stages
    gates = None
    head = None

    if config.kind == ModelKind.TABATTENTION and (config.use_cam or config.use_sam or config.use_tam):
        slots = [TabAttentionSlot(attention_config(config, i)) for i in range(config.stages)]
    elif config.kind == ModelKind.DAFT:
        slots[-1] = DaftFusion(config.widths[-1], config.tab_dim)
    elif config.kind == ModelKind.INTERACTIVE:
        gates = [InteractiveFusion(width, config.tab_dim) for width in config.widths]
    elif config.kind == ModelKind.LATE_CONCAT:
        head = LateConcatHead(features, config.tab_dim)

    model = RegressionModel(config, slots=slots, gates=gates, head=head)
    if seed is not None:
        init_params(model, seed)
    return model


def backbone_parameter_count(model: RegressionModel) -> int:
    """Trainable parameters of stem and residual blocks, excluding fusion and attention modules."""
    return int(sum(
        param.value.size
        for name, param in model.named_parameters()
        if name.startswith(("stem", "stages.")) and ".slot." not in name
    ))
