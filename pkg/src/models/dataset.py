"""In-memory dataset containers."""

from dataclasses import dataclass
from typing import List

import numpy as np

from .schemas import DatasetManifest


@dataclass
class Sample:
    """One video clip ``[T0, 1, H, W]`` with its raw tabular row and target."""

    sample_id: str
    video: np.ndarray
    tab: np.ndarray
    target: float

    @property
    def frames(self) -> int:
        return int(self.video.shape[0])


@dataclass
class Dataset:
    manifest: DatasetManifest
    samples: List[Sample]

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def targets(self) -> np.ndarray:
        return np.array([s.target for s in self.samples], dtype=np.float64)

    @property
    def tab_matrix(self) -> np.ndarray:
        return np.stack([s.tab for s in self.samples]).astype(np.float64)

    def subset(self, indices) -> List[Sample]:
        return [self.samples[i] for i in indices]
