"""Cross-validation protocol, metrics, significance tests and report files."""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from sklearn.metrics import mean_absolute_error, mean_absolute_percentage_error, mean_squared_error
from sklearn.model_selection import StratifiedKFold

from ..core.config import settings
from ..core.errors import NonPositiveTargetError, ShapeMismatchError, TooFewSamplesError
from ..core.logging import logger
from ..fusion import Variant, build_model, linreg_fit, linreg_predict, variant_config
from ..models.dataset import Dataset
from ..models.schemas import (
    AggregateReport,
    CVResult,
    FoldReport,
    MetricsRecord,
    ModelConfig,
    TrainConfig,
)
from ..nn import load_checkpoint, save_checkpoint
from .datagen_service import datagen_service
from .storage_service import storage_service
from .training_service import training_service


SUMMARY_COLUMNS = [
    "variant", "img", "tab", "mMAE", "sMAE", "mRMSE", "sRMSE", "mMAPE", "sMAPE", "p_value", "fold_hash",
]
FOLD_COLUMNS = ["fold", "n_val", "mae", "rmse", "mape"]
CV_RESULT_NAME = "cv_result.json"
CHECKPOINT_DIR = "checkpoints"


def metrics(preds, targets) -> MetricsRecord:
    """MAE, RMSE and MAPE (in percent); targets must be strictly positive."""
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if preds.shape != targets.shape:
        raise ShapeMismatchError("metrics", preds.shape, targets.shape)
    if np.any(targets <= 0.0):
        raise NonPositiveTargetError(float(targets[targets <= 0.0][0]))
    return MetricsRecord(
        mae=float(mean_absolute_error(targets, preds)),
        rmse=float(math.sqrt(mean_squared_error(targets, preds))),
        mape=float(100.0 * mean_absolute_percentage_error(targets, preds)),
    )


def stratified_folds(
    targets: Sequence[float],
    k: int = 5,
    bins: Optional[Sequence[float]] = None,
    seed: int = 0,
) -> np.ndarray:
    """Fold index per sample, balancing target bins across folds.

    ``bins`` are sorted thresholds; by default the empirical tertiles.
    """
    targets = np.asarray(targets, dtype=np.float64)
    n = targets.shape[0]
    if n < k:
        raise TooFewSamplesError(n, k)
    thresholds = np.quantile(targets, [1.0 / 3.0, 2.0 / 3.0]) if bins is None else np.asarray(bins)
    labels = np.digitize(targets, thresholds)
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    assignment = np.empty(n, dtype=np.int64)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            for fold, (_, val_idx) in enumerate(splitter.split(np.zeros(n), labels)):
                assignment[val_idx] = fold
    except ValueError as exc:
        raise TooFewSamplesError(n, k) from exc
    return assignment


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def aggregate(variant: Variant, folds: Sequence[FoldReport], assignment: Sequence[int]) -> AggregateReport:
    """Mean and population std of each metric across folds."""
    table = np.array([[f.mae, f.rmse, f.mape] for f in folds])
    mean, std = table.mean(axis=0), table.std(axis=0)
    return AggregateReport(
        variant=variant.name,
        img=variant.img,
        tab=variant.tab,
        mMAE=float(mean[0]), sMAE=float(std[0]),
        mRMSE=float(mean[1]), sRMSE=float(std[1]),
        mMAPE=float(mean[2]), sMAPE=float(std[2]),
        fold_hash=storage_service.digest([int(a) for a in assignment]),
    )


def paired_t_test(reference: Sequence[FoldReport], other: Sequence[FoldReport], metric: str = "mae") -> float:
    """Two-tailed paired t-test over per-fold values of ``metric``."""
    a = np.array([getattr(f, metric) for f in reference])
    b = np.array([getattr(f, metric) for f in other])
    if a.shape != b.shape:
        raise ShapeMismatchError("paired_t_test", a.shape, b.shape)
    if np.array_equal(a, b):
        return 1.0
    p_value = float(stats.ttest_rel(a, b).pvalue)
    return 1.0 if math.isnan(p_value) else p_value


def _format(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6f}"
    return "" if value is None else str(value)


def summary_row(report: AggregateReport) -> Dict[str, str]:
    return {key: _format(value) for key, value in report.model_dump().items()}


class EvaluationService:
    """Run the cross-validation protocol and write its reports."""

    def run_cv(
        self,
        dataset: Dataset,
        model_config: ModelConfig,
        train_config: TrainConfig,
        variant: Variant,
        run_dir: Optional[Path] = None,
        jobs: Optional[int] = None,
        assignment: Optional[np.ndarray] = None,
    ) -> CVResult:
        """Train and evaluate one variant on every fold.

        All randomness derives from ``(train_config.seed, fold)``. Checkpoints
        are written under ``run_dir`` when given.
        """
        lr_search: Dict[str, float] = {}
        lr = train_config.lr
        if lr is None and model_config.uses_imaging:
            lr, lr_search = self.select_learning_rate(dataset, model_config, train_config, variant, jobs)
        if assignment is None:
            assignment = stratified_folds(
                dataset.targets, train_config.folds, train_config.bin_thresholds, train_config.seed
            )

        jobs = max(1, jobs or settings.jobs)
        folds = range(train_config.folds)

        def run(fold: int) -> FoldReport:
            return self._run_fold(dataset, model_config, train_config, lr, fold, assignment, run_dir)

        if jobs == 1:
            reports = [run(fold) for fold in folds]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                reports = list(pool.map(run, folds))

        result = CVResult(
            model=model_config,
            train_config=train_config,
            folds=reports,
            aggregate=aggregate(variant, reports, assignment),
            fold_assignment=[int(a) for a in assignment],
            lr_search=lr_search,
        )
        logger.info(
            "Cross-validation finished",
            extra={"variant": variant.name, "mMAE": result.aggregate.mMAE, "mMAPE": result.aggregate.mMAPE},
        )
        return result

    def _run_fold(
        self,
        dataset: Dataset,
        model_config: ModelConfig,
        train_config: TrainConfig,
        lr: Optional[float],
        fold: int,
        assignment: np.ndarray,
        run_dir: Optional[Path],
    ) -> FoldReport:
        train_idx = np.flatnonzero(assignment != fold)
        val_idx = np.flatnonzero(assignment == fold)
        train_samples = dataset.subset(train_idx)
        val_samples = dataset.subset(val_idx)
        tab = dataset.tab_matrix
        train_tab, (val_tab,), tab_mean, tab_std = datagen_service.standardize_fit_apply(
            tab[train_idx], [tab[val_idx]]
        )
        train_targets = np.array([s.target for s in train_samples])
        val_targets = np.array([s.target for s in val_samples])
        logger.info("Fold started", extra={"fold": fold, "n_train": len(train_idx), "n_val": len(val_idx)})

        curve: List[float] = []
        checkpoint = None
        if not model_config.uses_imaging:
            weights = linreg_fit(train_tab, train_targets, model_config.ridge)
            preds = linreg_predict(weights, val_tab)
        else:
            seed = fold_seed(train_config.seed, fold)
            model = build_model(model_config, seed=seed)
            target_std = float(train_targets.std())
            model.set_target_scale(float(train_targets.mean()), target_std if target_std > 0 else 1.0)
            examples = training_service.build_examples(train_samples, train_tab)
            curve = training_service.train(model, examples, train_config, lr, seed)
            preds = training_service.predict(model, val_samples, val_tab)
            if run_dir is not None:
                checkpoint = f"{CHECKPOINT_DIR}/fold{fold}.ckpt"
                (run_dir / CHECKPOINT_DIR).mkdir(parents=True, exist_ok=True)
                save_checkpoint(model, run_dir / checkpoint)

        record = metrics(preds, val_targets)
        logger.info("Fold finished", extra={"fold": fold, **record.model_dump()})
        return FoldReport(
            fold=fold,
            sample_ids=[s.sample_id for s in val_samples],
            predictions=[float(p) for p in preds],
            targets=[float(t) for t in val_targets],
            mae=record.mae,
            rmse=record.rmse,
            mape=record.mape,
            loss_curve=curve,
            lr=lr if model_config.uses_imaging else None,
            tab_mean=[float(m) for m in tab_mean],
            tab_std=[float(s) for s in tab_std],
            checkpoint=checkpoint,
        )

    def select_learning_rate(
        self,
        dataset: Dataset,
        model_config: ModelConfig,
        train_config: TrainConfig,
        variant: Variant,
        jobs: Optional[int] = None,
    ) -> Tuple[float, Dict[str, float]]:
        """Grid search over ``train_config.lr_grid`` by mean fold MAE; ties keep the earlier entry."""
        scores: Dict[str, float] = {}
        best_lr, best_mae = None, math.inf
        for lr in train_config.lr_grid:
            candidate = train_config.model_copy(update={"lr": lr})
            result = self.run_cv(dataset, model_config, candidate, variant, run_dir=None, jobs=jobs)
            scores[repr(lr)] = result.aggregate.mMAE
            if result.aggregate.mMAE < best_mae:
                best_lr, best_mae = lr, result.aggregate.mMAE
        logger.info("Learning rate selected", extra={"lr": best_lr, "scores": scores})
        return best_lr, scores

    def evaluate_run(self, run_dir: Path, dataset: Dataset) -> List[FoldReport]:
        """Recompute held-out predictions from a stored train run."""
        result = CVResult.model_validate(storage_service.read_json(Path(run_dir) / CV_RESULT_NAME))
        assignment = np.asarray(result.fold_assignment)
        tab = dataset.tab_matrix
        reports = []
        for stored in result.folds:
            val_idx = np.flatnonzero(assignment == stored.fold)
            train_idx = np.flatnonzero(assignment != stored.fold)
            val_samples = dataset.subset(val_idx)
            val_tab = datagen_service.apply_standardization(tab[val_idx], stored.tab_mean, stored.tab_std)
            if not result.model.uses_imaging:
                train_tab = datagen_service.apply_standardization(tab[train_idx], stored.tab_mean, stored.tab_std)
                weights = linreg_fit(train_tab, dataset.targets[train_idx], result.model.ridge)
                preds = linreg_predict(weights, val_tab)
            else:
                model = build_model(result.model)
                load_checkpoint(model, Path(run_dir) / stored.checkpoint)
                preds = training_service.predict(model, val_samples, val_tab)
            targets = dataset.targets[val_idx]
            record = metrics(preds, targets)
            reports.append(stored.model_copy(update={
                "predictions": [float(p) for p in preds],
                "targets": [float(t) for t in targets],
                **record.model_dump(),
            }))
        return reports

    def write_cv_result(self, run_dir: Path, result: CVResult) -> None:
        storage_service.write_json(run_dir / CV_RESULT_NAME, result)

    def write_summary(self, path: Path, reports: Sequence[AggregateReport]) -> None:
        storage_service.write_csv(path, SUMMARY_COLUMNS, [summary_row(r) for r in reports])

    def write_fold_table(self, path: Path, folds: Sequence[FoldReport]) -> None:
        rows = [
            {"fold": f.fold, "n_val": len(f.sample_ids), "mae": _format(f.mae),
             "rmse": _format(f.rmse), "mape": _format(f.mape)}
            for f in folds
        ]
        storage_service.write_csv(path, FOLD_COLUMNS, rows)

    def compare(
        self,
        dataset: Dataset,
        base: ModelConfig,
        train_config: TrainConfig,
        variants: Sequence[Variant],
        reference: str,
        jobs: Optional[int] = None,
    ) -> List[CVResult]:
        """Run several variants on one fold partition; p-values are against ``reference``."""
        assignment = stratified_folds(dataset.targets, train_config.folds, train_config.bin_thresholds,
                                      train_config.seed)
        results = [
            self.run_cv(dataset, variant_config(base, v), train_config, v, jobs=jobs, assignment=assignment)
            for v in variants
        ]
        ref = next(r for r, v in zip(results, variants) if v.name == reference)
        for result, variant in zip(results, variants):
            if variant.name != reference:
                result.aggregate.p_value = paired_t_test(ref.folds, result.folds)
        return results


evaluation_service = EvaluationService()
