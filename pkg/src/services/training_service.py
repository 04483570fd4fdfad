"""Optimization: loss, Adam with coupled L2, cosine schedule and the per-fold training loop."""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..attention.backbone import RegressionModel
from ..core.errors import InvalidEpochError, ShapeMismatchError
from ..core.logging import logger
from ..models.dataset import Sample
from ..models.schemas import TrainConfig
from ..nn import Param
from ..tensor import Tape, Tensor, as_tensor, ops
from .datagen_service import datagen_service


def mse_loss(pred, target) -> Tensor:
    """Mean squared difference of two equal-length vectors, as a scalar tensor."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatchError("mse_loss", pred.shape, target.shape)
    diff = pred - target
    return ops.mean(diff * diff)


@dataclass
class AdamState:
    """First/second moment estimates keyed by parameter name."""

    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Sequence[Param],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr_t: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    l2: float = 1e-4,
) -> AdamState:
    """One bias-corrected Adam update, in place; L2 is added to the gradient first."""
    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for index, (param, grad) in enumerate(zip(params, grads)):
        key = param.name or f"#{index}"
        value = param.value.data
        g = grad + l2 * value if l2 else grad
        m = state.m.get(key)
        v = state.v.get(key)
        m = (1.0 - beta1) * g if m is None else beta1 * m + (1.0 - beta1) * g
        v = (1.0 - beta2) * g * g if v is None else beta2 * v + (1.0 - beta2) * g * g
        state.m[key] = m
        state.v[key] = v
        value -= lr_t * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return state


def cosine_lr(epoch: int, total_epochs: int, lr0: float, lr_min: float = 0.0) -> float:
    """Per-epoch cosine annealing from ``lr0`` at epoch 0 to ``lr_min`` at the last epoch."""
    if not 0 <= epoch < total_epochs:
        raise InvalidEpochError(epoch, total_epochs)
    if epoch == 0:
        return lr0
    if epoch == total_epochs - 1:
        return lr_min
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * epoch / (total_epochs - 1)))


@dataclass
class Example:
    """One training segment ``[16, 1, H, W]`` with its sample's standardized row and target."""

    video: np.ndarray
    tab: np.ndarray
    target: float


def to_batch(videos: Sequence[np.ndarray]) -> Tensor:
    """Stack ``[T, 1, H, W]`` clips into a ``[N, 1, T, H, W]`` tensor."""
    return Tensor(np.transpose(np.stack(videos), (0, 2, 1, 3, 4)))


class TrainingService:
    """Train imaging models on segments and predict per sample."""

    @staticmethod
    def build_examples(samples: Sequence[Sample], tab_rows: np.ndarray) -> List[Example]:
        """Every segment of every sample becomes an example inheriting its target."""
        return [
            Example(video=segment, tab=tab_rows[i], target=sample.target)
            for i, sample in enumerate(samples)
            for segment in datagen_service.segment(sample.video)
        ]

    def train_step(
        self,
        model: RegressionModel,
        video: Tensor,
        tab: Optional[Tensor],
        targets: np.ndarray,
        state: AdamState,
        lr: float,
        config: TrainConfig,
    ) -> float:
        """Forward, backward and one Adam update; returns the loss before the update.

        The loss is measured in units of the model's target scale.
        """
        params = model.parameters()
        scale = float(model.target_std.value.item())
        with Tape() as tape:
            tape.watch_all(p.value for p in params)
            pred = model(video, tab if model.config.uses_tabular else None)
            loss = mse_loss(pred, Tensor(targets)) * (1.0 / (scale * scale))
            grads = tape.backward(loss)
        adam_step(
            params,
            [grads.of(p.value) for p in params],
            state,
            lr,
            betas=config.betas,
            eps=config.eps,
            l2=config.weight_decay,
        )
        return loss.item()

    def train(
        self,
        model: RegressionModel,
        examples: Sequence[Example],
        config: TrainConfig,
        lr: float,
        seed: int,
    ) -> List[float]:
        """Shuffled mini-batch training with a per-epoch cosine schedule; returns mean loss per epoch.

        A trailing batch with fewer than two examples is dropped.
        """
        rng = np.random.default_rng(seed)
        state = AdamState()
        model.train()
        curve: List[float] = []
        for epoch in range(config.epochs):
            lr_t = cosine_lr(epoch, config.epochs, lr, config.lr_min)
            order = rng.permutation(len(examples))
            losses = []
            for start in range(0, len(order), config.batch_size):
                batch = [examples[i] for i in order[start:start + config.batch_size]]
                if len(batch) < 2:
                    continue
                videos = [self._maybe_augment(ex.video, rng, config) for ex in batch]
                tab = Tensor(np.stack([ex.tab for ex in batch]))
                targets = np.array([ex.target for ex in batch])
                losses.append(self.train_step(model, to_batch(videos), tab, targets, state, lr_t, config))
            epoch_loss = float(np.mean(losses)) if losses else float("nan")
            curve.append(epoch_loss)
            logger.debug("Epoch finished", extra={"epoch": epoch, "lr": lr_t, "loss": epoch_loss})
        return curve

    @staticmethod
    def _maybe_augment(video: np.ndarray, rng: np.random.Generator, config: TrainConfig) -> np.ndarray:
        if not config.augmentation.any:
            return video
        return datagen_service.augment(video, int(rng.integers(2**32)), config.augmentation)

    @staticmethod
    def predict_sample(model: RegressionModel, video: np.ndarray, tab_row: Optional[np.ndarray]) -> float:
        """Eval-mode prediction averaged over all segments of one clip."""
        segments = datagen_service.segment(video)
        was_training = model.training
        model.eval()
        try:
            tab = None
            if model.config.uses_tabular:
                tab = Tensor(np.tile(np.asarray(tab_row, dtype=np.float64), (len(segments), 1)))
            preds = model(to_batch(segments), tab)
        finally:
            model.train(was_training)
        return float(np.mean(preds.data))

    def predict(self, model: RegressionModel, samples: Sequence[Sample], tab_rows: np.ndarray) -> np.ndarray:
        return np.array([
            self.predict_sample(model, sample.video, tab_rows[i]) for i, sample in enumerate(samples)
        ])


training_service = TrainingService()
