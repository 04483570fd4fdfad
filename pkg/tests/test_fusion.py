"""
Fusion baseline and model factory tests.

To run: pytest tests/test_fusion.py
"""

import numpy as np
import pytest

from src.core.errors import SingularSystemError, ValidationFailedError
from src.fusion import (
    ABLATION_VARIANTS,
    COMPARISON_VARIANTS,
    DaftFusion,
    InteractiveFusion,
    LateConcatHead,
    backbone_parameter_count,
    build_model,
    daft_fuse,
    interactive_fuse,
    late_concat_head,
    linreg_fit,
    linreg_predict,
    parse_kind,
    variant_config,
)
from src.attention import TabAttentionSlot
from src.models.schemas import ModelKind
from tests.conftest import tiny_model_config


def _randomize(module, rng):
    for param in module.parameters():
        param.value.data[...] = rng.normal(scale=0.5, size=param.shape)
    return module


def _mlp_np(mlp, v):
    hidden = np.maximum(v @ mlp.fc1.weight.value.data.T + mlp.fc1.bias.value.data, 0.0)
    return hidden @ mlp.fc2.weight.value.data.T + mlp.fc2.bias.value.data


def test_linreg_recovers_exact_coefficients(rng):
    """Noise-free targets give back the generating intercept and weights."""
    X = rng.standard_normal((30, 3))
    y = 2.0 + X @ np.array([1.0, -3.0, 0.5])
    weights = linreg_fit(X, y)
    np.testing.assert_allclose(weights, [2.0, 1.0, -3.0, 0.5], atol=1e-6)
    np.testing.assert_allclose(linreg_predict(weights, X), y, atol=1e-6)


def test_linreg_without_ridge_matches_least_squares(rng):
    """With no penalty the fit is the least-squares solution."""
    X = rng.standard_normal((25, 4))
    y = rng.standard_normal(25)
    design = np.hstack([np.ones((25, 1)), X])
    expected = np.linalg.lstsq(design, y, rcond=None)[0]
    np.testing.assert_allclose(linreg_fit(X, y, ridge=0.0), expected, atol=1e-9)


def test_linreg_rejects_collinear_features(rng):
    """A duplicated column makes the normal equations singular."""
    column = rng.standard_normal((20, 1))
    X = np.hstack([column, column, rng.standard_normal((20, 1))])
    with pytest.raises(SingularSystemError):
        linreg_fit(X, rng.standard_normal(20), ridge=0.0)


def test_interactive_gate_matches_oracle(rng):
    """Each channel is scaled by the tabular gate value for its sample."""
    module = _randomize(InteractiveFusion(3, 2), rng)
    fmap = rng.standard_normal((2, 3, 2, 4, 4))
    tab = rng.standard_normal((2, 2))
    out = interactive_fuse(fmap, tab, module).data
    for n in range(2):
        gate = _mlp_np(module.gate, tab[n])
        np.testing.assert_allclose(out[n], fmap[n] * gate[:, None, None, None], atol=1e-12)


def test_interactive_zero_gate_blocks_features(rng):
    """A zero-initialized gate multiplies every feature by zero."""
    fmap = rng.standard_normal((2, 3, 1, 2, 2))
    out = InteractiveFusion(3, 2)(fmap, rng.standard_normal((2, 2)))
    np.testing.assert_array_equal(out.data, np.zeros(fmap.shape))


def test_daft_scale_and_shift_match_oracle(rng):
    """DAFT applies (1 + gamma) * x + beta per channel."""
    module = _randomize(DaftFusion(3, 2), rng)
    fmap = rng.standard_normal((2, 3, 2, 4, 4))
    tab = rng.standard_normal((2, 2))
    out = daft_fuse(fmap, tab, module).data
    for n in range(2):
        params = _mlp_np(module.film, tab[n])
        gamma, beta = params[:3], params[3:]
        expected = fmap[n] * (1.0 + gamma)[:, None, None, None] + beta[:, None, None, None]
        np.testing.assert_allclose(out[n], expected, atol=1e-12)


def test_daft_with_zero_parameters_is_identity(rng):
    """Zero gamma and beta leave the feature map unchanged."""
    fmap = rng.standard_normal((2, 3, 1, 2, 2))
    out = DaftFusion(3, 2)(fmap, rng.standard_normal((2, 2)))
    np.testing.assert_array_equal(out.data, fmap)


def test_late_concat_head_matches_oracle(rng):
    """The head is a linear map over pooled features followed by the tabular row."""
    module = _randomize(LateConcatHead(4, 2), rng)
    pooled = rng.standard_normal((3, 4))
    tab = rng.standard_normal((3, 2))
    out = late_concat_head(pooled, tab, module).data
    weight, bias = module.fc.weight.value.data, module.fc.bias.value.data
    expected = np.hstack([pooled, tab]) @ weight[0] + bias[0]
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_variant_tables_are_in_report_order():
    """Ablation and comparison rows keep their documented order."""
    assert [v.name for v in ABLATION_VARIANTS] == [
        "baseline", "+TAM", "+CBAM+Tab", "+TAM+Tab", "TabAttention",
    ]
    assert [v.name for v in COMPARISON_VARIANTS] == [
        "linreg", "image_only", "daft", "interactive", "late_concat", "tabattention",
    ]
    assert [v.tab for v in ABLATION_VARIANTS] == [False, False, True, True, True]


def test_imaging_variants_share_backbone_size():
    """Every imaging variant has the same number of backbone parameters."""
    base = tiny_model_config()
    counts = {
        v.name: backbone_parameter_count(build_model(variant_config(base, v)))
        for v in COMPARISON_VARIANTS + ABLATION_VARIANTS
        if v.img
    }
    assert len(set(counts.values())) == 1


def test_build_model_places_fusion_modules():
    """Each fusion kind plugs into its own place in the backbone."""
    base = tiny_model_config(stages=2, widths=(4, 6), input_size=(8, 8))
    tabattention = build_model(base)
    assert all(isinstance(block.slot, TabAttentionSlot) for block in tabattention.stages)

    daft = build_model(base.model_copy(update={"kind": ModelKind.DAFT}))
    assert daft.stages[0].slot is None and isinstance(daft.stages[1].slot, DaftFusion)

    interactive = build_model(base.model_copy(update={"kind": ModelKind.INTERACTIVE}))
    assert [g.channels for g in interactive.gates] == [4, 6]

    late = build_model(base.model_copy(update={"kind": ModelKind.LATE_CONCAT}))
    assert isinstance(late.head, LateConcatHead)

    plain = build_model(base.model_copy(update={"use_cam": False, "use_sam": False, "use_tam": False}))
    assert all(block.slot is None for block in plain.stages)


def test_build_model_is_deterministic_per_seed():
    """Identical seeds produce identical parameters."""
    config = tiny_model_config()
    first, second = build_model(config, seed=11), build_model(config, seed=11)
    for name, param in first.state().items():
        np.testing.assert_array_equal(param.value.data, second.state()[name].value.data)


def test_linreg_has_no_imaging_model():
    """Tabular regression is fitted in closed form, not built as a network."""
    with pytest.raises(ValidationFailedError):
        build_model(tiny_model_config(kind=ModelKind.TABULAR_LINREG))


def test_parse_kind_accepts_alias_and_rejects_unknown():
    """'linreg' is shorthand for tabular regression."""
    assert parse_kind("linreg") == ModelKind.TABULAR_LINREG
    assert parse_kind("daft") == ModelKind.DAFT
    with pytest.raises(ValidationFailedError):
        parse_kind("transformer")


@pytest.mark.parametrize("kind", [ModelKind.DAFT, ModelKind.INTERACTIVE, ModelKind.LATE_CONCAT,
                                  ModelKind.TABATTENTION, ModelKind.IMAGE_ONLY])
def test_every_fusion_model_predicts_one_value_per_clip(rng, kind):
    """All imaging variants map a clip batch and tabular batch to [N]."""
    config = tiny_model_config(kind=kind, frames=4)
    model = build_model(config, seed=0)
    tab = rng.standard_normal((2, 3)) if config.uses_tabular else None
    assert model(rng.standard_normal((2, 1, 4, 8, 8)), tab).shape == (2,)
