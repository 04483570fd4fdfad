"""Shared fixtures."""

import numpy as np
import pytest

from src.models.schemas import ModelConfig, SyntheticTaskSpec
from src.services.datagen_service import datagen_service
from src.services.storage_service import storage_service


def tiny_spec(**overrides) -> SyntheticTaskSpec:
    """16x16 clips of 16-20 frames, three tabular features."""
    values = dict(n_samples=10, frames_min=16, frames_max=20, height=16, width=16, tab_dim=3)
    values.update(overrides)
    return SyntheticTaskSpec(**values)


def tiny_model_config(**overrides) -> ModelConfig:
    """One stage of width 4 on 16-frame 8x8 clips."""
    values = dict(stages=1, widths=(4,), z=2, frames=16, input_size=(8, 8), tab_dim=3, sam_kernel=3)
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_dataset():
    return datagen_service.generate(tiny_spec(), seed=3, jobs=1)


@pytest.fixture
def tiny_data_dir(tmp_path, tiny_dataset):
    path = tmp_path / "data"
    storage_service.write_dataset(tiny_dataset, path)
    return path
