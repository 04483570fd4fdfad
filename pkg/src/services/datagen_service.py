"""Synthetic dataset generation, standardization, segmentation and augmentation."""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from sklearn.preprocessing import StandardScaler

from ..core.config import settings
from ..core.errors import InvalidSpecError, ShapeMismatchError, TooFewSamplesError, TooShortError
from ..core.logging import logger
from ..models.dataset import Dataset, Sample
from ..models.schemas import (
    SEGMENT_LENGTH,
    AugmentationFlags,
    DatasetManifest,
    ManifestEntry,
    SyntheticTaskSpec,
)
from ..tensor import Tensor
from .storage_service import SAMPLES_DIR


BACKGROUND = 0.15
FOREGROUND = 0.75
AXIS_RANGE = (0.12, 0.30)
SPECKLE_RANGE = (0.02, 0.08)
LATENT_SCALE = 30.0
LATENT_NOISE = 0.3


def ellipse_circumference(a: float, b: float) -> float:
    """Ramanujan's second approximation."""
    h = ((a - b) / (a + b)) ** 2
    return math.pi * (a + b) * (1.0 + 3.0 * h / (10.0 + math.sqrt(4.0 - 3.0 * h)))


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def render_ellipse(
    frames: int,
    height: int,
    width: int,
    axes: Tuple[float, float],
    theta: float,
    centers: np.ndarray,
    speckle: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Filled rotated ellipse per frame on a speckled background, ``[T, 1, H, W]`` in [0, 1]."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    a, b = axes
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    video = np.empty((frames, 1, height, width))
    for t in range(frames):
        dy = yy - centers[t, 0]
        dx = xx - centers[t, 1]
        u = dx * cos_t + dy * sin_t
        v = -dx * sin_t + dy * cos_t
        inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
        frame = np.where(inside, FOREGROUND, BACKGROUND)
        video[t, 0] = frame + speckle * rng.standard_normal((height, width))
    return np.clip(video, 0.0, 1.0)


def segment_starts(frames: int, seg_len: int = SEGMENT_LENGTH) -> List[int]:
    """Non-overlapping windows plus an overlapping tail window when frames remain."""
    if frames < seg_len:
        raise TooShortError(frames, seg_len)
    starts = list(range(0, frames - seg_len + 1, seg_len))
    if starts[-1] + seg_len < frames:
        starts.append(frames - seg_len)
    return starts


def hflip(video: np.ndarray) -> np.ndarray:
    return video[..., ::-1].copy()


def adjust_brightness_contrast(video: np.ndarray, brightness: float, contrast: float) -> np.ndarray:
    """Contrast about mid-gray, then a brightness shift; not clipped."""
    return (video - 0.5) * contrast + 0.5 + brightness


class DatagenService:
    """Build and preprocess synthetic multimodal datasets."""

    def generate(self, spec: SyntheticTaskSpec, seed: int, jobs: Optional[int] = None) -> Dataset:
        """Render ``spec.n_samples`` samples; a pure function of ``(spec, seed)``."""
        jobs = jobs or settings.jobs
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            samples = list(pool.map(lambda i: self._generate_sample(spec, seed, i), range(spec.n_samples)))

        nonpositive = [s.target for s in samples if s.target <= 0.0]
        if nonpositive:
            raise InvalidSpecError(
                "Spec produces non-positive targets; raise the offset.",
                {"min_target": min(nonpositive)},
            )

        entries = [
            ManifestEntry(
                id=s.sample_id,
                video=f"{SAMPLES_DIR}/{s.sample_id}.video.ndt",
                tab=f"{SAMPLES_DIR}/{s.sample_id}.tab.ndt",
                target=s.target,
                frames=s.frames,
            )
            for s in samples
        ]
        manifest = DatasetManifest(
            n_samples=len(samples), tab_dim=spec.tab_dim, seed=seed, spec=spec, samples=entries,
        )
        logger.info("Dataset generated", extra={"samples": len(samples), "seed": seed})
        return Dataset(manifest=manifest, samples=samples)

    def _generate_sample(self, spec: SyntheticTaskSpec, seed: int, index: int) -> Sample:
        rng = sample_rng(seed, index)
        scale = min(spec.height, spec.width)
        a, b = rng.uniform(*AXIS_RANGE, size=2) * scale
        theta = rng.uniform(0.0, math.pi)
        speckle = rng.uniform(*SPECKLE_RANGE)
        frames = int(rng.integers(spec.frames_min, spec.frames_max + 1))
        center = np.array([spec.height / 2.0, spec.width / 2.0])
        if spec.jitter > 0:
            centers = center + rng.normal(0.0, spec.jitter, size=(frames, 2))
        else:
            centers = np.tile(center, (frames, 1))

        latent = ellipse_circumference(a, b) / scale
        tab = self._tabular_row(spec, latent, rng)
        independent = tab[self.independent_index(spec.tab_dim)]
        noise = rng.normal(0.0, spec.noise_std) if spec.noise_std > 0 else 0.0
        target = spec.offset + spec.a_img * latent + spec.a_tab * independent + noise

        video = render_ellipse(frames, spec.height, spec.width, (a, b), theta, centers, speckle, rng)
        return Sample(sample_id=f"s{index:04d}", video=video, tab=tab, target=float(target))

    @staticmethod
    def independent_index(tab_dim: int) -> int:
        """Column of the tabular factor that is independent of the image."""
        return max(1, tab_dim // 3)

    def _tabular_row(self, spec: SyntheticTaskSpec, latent: float, rng: np.random.Generator) -> np.ndarray:
        """Latent copies mixed with noise by the redundancy, the independent factor, then distractors."""
        copies = self.independent_index(spec.tab_dim)
        rho = spec.redundancy
        mix = math.sqrt(max(0.0, 1.0 - rho * rho))
        row = np.empty(spec.tab_dim)
        for j in range(copies):
            row[j] = LATENT_SCALE * (rho * latent + mix * LATENT_NOISE * rng.standard_normal())
        row[copies] = rng.uniform(0.0, 1.0)
        if spec.tab_dim > copies + 1:
            row[copies + 1:] = rng.standard_normal(spec.tab_dim - copies - 1)
        return row

    @staticmethod
    def standardize_fit_apply(
        train: np.ndarray, others: Sequence[np.ndarray] = ()
    ) -> Tuple[np.ndarray, List[np.ndarray], np.ndarray, np.ndarray]:
        """Fit per-feature mean/std on ``train`` only and apply to every matrix.

        Constant columns map to zero with a recorded std of 1.
        """
        train = np.asarray(train, dtype=np.float64)
        if train.ndim != 2:
            raise ShapeMismatchError("standardize", train.shape, reason="Expected a [N, D] matrix.")
        if train.shape[0] < 2:
            raise TooFewSamplesError(train.shape[0], 2, "Standardization needs at least two training rows.")
        scaler = StandardScaler().fit(train)
        mean = scaler.mean_.copy()
        std = scaler.scale_.copy()
        return (
            scaler.transform(train),
            [scaler.transform(np.asarray(m, dtype=np.float64)) for m in others],
            mean,
            std,
        )

    @staticmethod
    def apply_standardization(matrix: np.ndarray, mean: Sequence[float], std: Sequence[float]) -> np.ndarray:
        return (np.asarray(matrix, dtype=np.float64) - np.asarray(mean)) / np.asarray(std)

    @staticmethod
    def segment(video: np.ndarray, seg_len: int = SEGMENT_LENGTH) -> List[np.ndarray]:
        """Consecutive ``seg_len``-frame windows of a ``[T0, 1, H, W]`` clip."""
        if isinstance(video, Tensor):
            video = video.data
        return [video[s:s + seg_len] for s in segment_starts(video.shape[0], seg_len)]

    @staticmethod
    def augment(video: np.ndarray, seed: int, flags: AugmentationFlags) -> np.ndarray:
        """Clip-consistent augmentation, clipped to [0, 1]; deterministic per seed.

        Order: rotation, horizontal flip, brightness/contrast, gaussian noise.
        """
        rng = np.random.default_rng(seed)
        out = np.asarray(video, dtype=np.float64)
        if flags.rotation:
            angle = rng.uniform(-flags.max_rotation_deg, flags.max_rotation_deg)
            out = ndimage.rotate(out, angle, axes=(-1, -2), reshape=False, order=0, mode="constant", cval=0.0)
        if flags.hflip and rng.random() < 0.5:
            out = hflip(out)
        if flags.brightness_contrast:
            brightness = rng.uniform(-flags.brightness, flags.brightness)
            contrast = rng.uniform(1.0 - flags.contrast, 1.0 + flags.contrast)
            out = adjust_brightness_contrast(out, brightness, contrast)
        if flags.gaussian_noise:
            out = out + rng.normal(0.0, flags.noise_std, size=out.shape)
        return np.clip(out, 0.0, 1.0)


datagen_service = DatagenService()
