"""Comparison baselines and the model factory."""

from .baselines import (
    DaftFusion,
    InteractiveFusion,
    LateConcatHead,
    daft_fuse,
    interactive_fuse,
    late_concat_head,
    linreg_fit,
    linreg_predict,
)
from .factory import (
    ABLATION_VARIANTS,
    COMPARISON_VARIANTS,
    Variant,
    backbone_parameter_count,
    build_model,
    parse_kind,
    variant_config,
)

__all__ = [
    "ABLATION_VARIANTS",
    "COMPARISON_VARIANTS",
    "DaftFusion",
    "InteractiveFusion",
    "LateConcatHead",
    "Variant",
    "backbone_parameter_count",
    "build_model",
    "daft_fuse",
    "interactive_fuse",
    "late_concat_head",
    "linreg_fit",
    "linreg_predict",
    "parse_kind",
    "variant_config",
]
