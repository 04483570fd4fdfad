"""
Learnability and ablation-ordering suites.

Both take minutes on a CPU and are deselected by default.

To run: pytest -m slow tests/test_acceptance.py
"""

import numpy as np
import pytest

from src.fusion import ABLATION_VARIANTS, build_model
from src.models.schemas import ModelConfig, TrainConfig
from src.services.datagen_service import datagen_service
from src.services.evaluation_service import evaluation_service
from src.services.training_service import AdamState, to_batch, training_service
from src.tensor import Tensor
from tests.conftest import tiny_spec


pytestmark = pytest.mark.slow


def _desk_config(**overrides) -> ModelConfig:
    """Reduced desk model: two stages of widths (8, 16) on 16-frame 16x16 clips.

    The default ModelConfig is three stages of widths (8, 16, 32) at 64x64.
    Block layout, attention placement and the training step are the same;
    only depth, width and frame size are smaller.
    """
    values = dict(stages=2, widths=(8, 16), z=4, sam_kernel=3, frames=16, input_size=(16, 16), tab_dim=3)
    values.update(overrides)
    return ModelConfig(**values)


def test_full_model_overfits_eight_samples():
    """400 Adam steps on one fixed batch bring the reduced model's loss below 1% of its start."""
    dataset = datagen_service.generate(tiny_spec(n_samples=8, frames_max=16), seed=0, jobs=1)
    tab_z, _, _, _ = datagen_service.standardize_fit_apply(dataset.tab_matrix)
    targets = dataset.targets
    model = build_model(_desk_config(), seed=0)
    model.set_target_scale(float(targets.mean()), float(targets.std()))

    videos = to_batch([s.video for s in dataset.samples])
    tab = Tensor(tab_z)
    train_config = TrainConfig(weight_decay=0.0)
    state = AdamState()
    losses = [
        training_service.train_step(model, videos, tab, targets, state, 1e-3, train_config)
        for _ in range(400)
    ]
    assert min(losses[-10:]) < 0.01 * losses[0]


def test_tabular_attention_beats_image_only_baseline():
    """With tabular-dependent targets, every tab-conditioned variant beats the image-only baseline."""
    spec = tiny_spec(n_samples=45, frames_max=16, redundancy=0.5, a_tab=800.0)
    train_config = TrainConfig(folds=3, epochs=15, batch_size=8, lr=3e-3)
    mape = {v.name: [] for v in ABLATION_VARIANTS}
    for seed in range(3):
        dataset = datagen_service.generate(spec, seed=seed, jobs=1)
        results = evaluation_service.compare(
            dataset, _desk_config(), train_config.model_copy(update={"seed": seed}),
            ABLATION_VARIANTS, reference="TabAttention", jobs=3,
        )
        for variant, result in zip(ABLATION_VARIANTS, results):
            mape[variant.name].append(result.aggregate.mMAPE)

    mean = {name: float(np.mean(values)) for name, values in mape.items()}
    assert mean["TabAttention"] < 0.9 * mean["baseline"]
    for name in ("+CBAM+Tab", "+TAM+Tab", "TabAttention"):
        assert mean[name] < mean["baseline"]
