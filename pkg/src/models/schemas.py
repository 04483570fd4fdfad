"""Pydantic schemas for configurations, manifests and reports."""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.errors import InvalidSpecError, TooShortError


SEGMENT_LENGTH = 16


# Layer schemas
class MLPSpec(BaseModel):
    """Two-layer perceptron: linear -> relu -> linear."""

    in_dim: int = Field(ge=1)
    hidden_dim: int = Field(ge=1)
    out_dim: int = Field(ge=1)
    hidden_activation: str = "relu"
    bias: bool = True

    @field_validator("hidden_activation")
    @classmethod
    def _relu_only(cls, value: str) -> str:
        if value != "relu":
            raise ValueError("only 'relu' hidden activation is supported")
        return value


def hidden_size(value: float) -> int:
    """Bottleneck width rule: max(1, floor(value))."""
    return max(1, int(value))


# Model schemas
class TabAttentionConfig(BaseModel):
    """Architectural hyperparameters of one TabAttention block."""

    C: int = Field(ge=1)
    T: int = Field(ge=1)
    H: int = Field(ge=1)
    W: int = Field(ge=1)
    D: int = Field(ge=1)
    z: int = Field(default=16, ge=1)
    heads: int = Field(default=2, ge=1)
    d: int = Field(default=4, ge=1)
    sam_kernel: int = Field(default=7, ge=1)
    use_cam: bool = True
    use_sam: bool = True
    use_tam: bool = True
    use_tab: bool = True

    @field_validator("sam_kernel")
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("sam_kernel must be odd")
        return value

    @property
    def any_stage(self) -> bool:
        return self.use_cam or self.use_sam or self.use_tam


class ModelKind(str, Enum):
    """Fusion variant."""

    IMAGE_ONLY = "image_only"
    TABULAR_LINREG = "tabular_linreg"
    LATE_CONCAT = "late_concat"
    INTERACTIVE = "interactive"
    DAFT = "daft"
    TABATTENTION = "tabattention"


class ModelConfig(BaseModel):
    """Serialized architecture of a regression model."""

    kind: ModelKind = ModelKind.TABATTENTION
    stages: int = Field(default=3, ge=1)
    widths: Tuple[int, ...] = (8, 16, 32)
    z: int = Field(default=16, ge=1)
    heads: int = Field(default=2, ge=1)
    d: int = Field(default=4, ge=1)
    sam_kernel: int = Field(default=7, ge=1)
    use_cam: bool = True
    use_sam: bool = True
    use_tam: bool = True
    use_tab: bool = True
    frames: int = Field(default=SEGMENT_LENGTH, ge=1)
    input_size: Tuple[int, int] = (64, 64)
    tab_dim: int = Field(default=6, ge=1)
    ridge: float = Field(default=1e-8, ge=0.0)

    @model_validator(mode="after")
    def _widths_match_stages(self) -> "ModelConfig":
        if len(self.widths) != self.stages:
            raise ValueError(f"widths has {len(self.widths)} entries for {self.stages} stages")
        if any(w < 1 for w in self.widths):
            raise ValueError("widths must be positive")
        if self.sam_kernel % 2 == 0:
            raise ValueError("sam_kernel must be odd")
        return self

    @property
    def uses_imaging(self) -> bool:
        return self.kind != ModelKind.TABULAR_LINREG

    @property
    def uses_tabular(self) -> bool:
        if self.kind == ModelKind.IMAGE_ONLY:
            return False
        if self.kind == ModelKind.TABATTENTION:
            return self.use_tab and (self.use_cam or self.use_sam or self.use_tam)
        return True


# Dataset schemas
class SyntheticTaskSpec(BaseModel):
    """Parameters of the synthetic ellipse-circumference regression task."""

    n_samples: int = 96
    frames_min: int = SEGMENT_LENGTH
    frames_max: int = 48
    height: int = 64
    width: int = 64
    tab_dim: int = 6
    a_img: float = 1000.0
    a_tab: float = 800.0
    offset: float = 1000.0
    noise_std: float = 50.0
    redundancy: float = 0.5
    jitter: float = 2.0

    @model_validator(mode="after")
    def _check(self) -> "SyntheticTaskSpec":
        if self.frames_min < SEGMENT_LENGTH:
            raise TooShortError(self.frames_min, SEGMENT_LENGTH)
        if self.frames_max < self.frames_min:
            raise InvalidSpecError("frames_max must be >= frames_min")
        if self.n_samples < 1:
            raise InvalidSpecError("n_samples must be >= 1")
        if self.height < 8 or self.width < 8:
            raise InvalidSpecError("frames must be at least 8x8 pixels")
        if self.tab_dim < 2:
            raise InvalidSpecError("tab_dim must be >= 2 (latent copy and independent factor)")
        if not 0.0 <= self.redundancy <= 1.0:
            raise InvalidSpecError("redundancy must lie in [0, 1]", {"redundancy": self.redundancy})
        if self.noise_std < 0.0:
            raise InvalidSpecError("noise_std must be >= 0", {"noise_std": self.noise_std})
        if self.jitter < 0.0:
            raise InvalidSpecError("jitter must be >= 0")
        return self


class ManifestEntry(BaseModel):
    """One sample in a dataset manifest."""

    id: str
    video: str
    tab: str
    target: float
    frames: int


class DatasetManifest(BaseModel):
    """Dataset directory manifest."""

    version: int = 1
    n_samples: int
    tab_dim: int
    seed: int
    spec: SyntheticTaskSpec
    samples: List[ManifestEntry]

    @model_validator(mode="after")
    def _unique_ids(self) -> "DatasetManifest":
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("sample ids must be unique")
        if len(ids) != self.n_samples:
            raise ValueError("n_samples does not match the sample list")
        return self


class AugmentationFlags(BaseModel):
    """Clip-level augmentations and their ranges."""

    hflip: bool = False
    brightness_contrast: bool = False
    gaussian_noise: bool = False
    rotation: bool = False
    noise_std: float = Field(default=0.02, ge=0.0)
    brightness: float = Field(default=0.1, ge=0.0)
    contrast: float = Field(default=0.2, ge=0.0, lt=1.0)
    max_rotation_deg: float = Field(default=15.0, ge=0.0)

    @classmethod
    def all_enabled(cls) -> "AugmentationFlags":
        return cls(hflip=True, brightness_contrast=True, gaussian_noise=True, rotation=True)

    @property
    def any(self) -> bool:
        return self.hflip or self.brightness_contrast or self.gaussian_noise or self.rotation


# Training schemas
class TrainConfig(BaseModel):
    """Optimization protocol."""

    epochs: int = Field(default=30, ge=1)
    batch_size: int = Field(default=16, ge=2)
    lr: Optional[float] = Field(default=1e-3, gt=0.0)
    lr_grid: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    lr_min: float = Field(default=0.0, ge=0.0)
    weight_decay: float = Field(default=1e-4, ge=0.0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0.0)
    seed: int = 0
    folds: int = Field(default=5, ge=2)
    bin_thresholds: Optional[Tuple[float, ...]] = None
    augmentation: AugmentationFlags = Field(default_factory=AugmentationFlags)

    @field_validator("bin_thresholds")
    @classmethod
    def _sorted(cls, value):
        if value is not None and list(value) != sorted(value):
            raise ValueError("bin thresholds must be sorted")
        return value


class MetricsRecord(BaseModel):
    """Regression metrics."""

    mae: float
    rmse: float
    mape: float


class FoldReport(BaseModel):
    """Outcome of one cross-validation fold."""

    model_config = ConfigDict(protected_namespaces=())

    fold: int
    sample_ids: List[str]
    predictions: List[float]
    targets: List[float]
    mae: float
    rmse: float
    mape: float
    loss_curve: List[float] = Field(default_factory=list)
    lr: Optional[float] = None
    tab_mean: List[float] = Field(default_factory=list)
    tab_std: List[float] = Field(default_factory=list)
    checkpoint: Optional[str] = None

    @property
    def metrics(self) -> MetricsRecord:
        return MetricsRecord(mae=self.mae, rmse=self.rmse, mape=self.mape)


class AggregateReport(BaseModel):
    """Mean and population std of fold metrics."""

    variant: str
    img: bool
    tab: bool
    mMAE: float
    sMAE: float
    mRMSE: float
    sRMSE: float
    mMAPE: float
    sMAPE: float
    p_value: Optional[float] = None
    fold_hash: str = ""


class CVResult(BaseModel):
    """Fold reports plus their aggregate."""

    model_config = ConfigDict(protected_namespaces=())

    model: ModelConfig
    train_config: TrainConfig
    folds: List[FoldReport]
    aggregate: AggregateReport
    fold_assignment: List[int]
    lr_search: Dict[str, float] = Field(default_factory=dict)


class RunConfig(BaseModel):
    """Parsed command line, echoed into every run directory."""

    model_config = ConfigDict(protected_namespaces=())

    command: str
    dataset: Optional[str] = None
    output: Optional[str] = None
    seed: int = 0
    model: Optional[ModelConfig] = None
    train: Optional[TrainConfig] = None
    extra: Dict[str, Any] = Field(default_factory=dict)
