"""Training, evaluation, ablation and comparison commands."""

import argparse
import json
from pathlib import Path
from typing import Optional

from ..core.config import settings
from ..core.logging import logger
from ..fusion import ABLATION_VARIANTS, COMPARISON_VARIANTS, Variant, parse_kind, variant_config
from ..models.dataset import Dataset
from ..models.schemas import AugmentationFlags, ModelConfig, ModelKind, RunConfig, TrainConfig
from ..services.evaluation_service import (
    SUMMARY_COLUMNS,
    aggregate,
    evaluation_service,
    summary_row,
)
from ..services.storage_service import storage_service


FULL_SCALE_EPOCHS = 250
COMPARE_COLUMNS = [c for c in SUMMARY_COLUMNS if c != "fold_hash"]


def build_train_config(args: argparse.Namespace) -> TrainConfig:
    """TrainConfig from flags; ``--paper-scale`` restores the full protocol defaults."""
    epochs = args.epochs if args.epochs is not None else (FULL_SCALE_EPOCHS if args.full_scale else 30)
    if args.lr == "grid" or (args.lr is None and args.full_scale):
        lr = None
    else:
        lr = float(args.lr) if args.lr is not None else 1e-3
    return TrainConfig(
        epochs=epochs,
        batch_size=args.batch_size,
        lr=lr,
        seed=args.seed,
        folds=args.folds,
        augmentation=AugmentationFlags.all_enabled() if args.augment else AugmentationFlags(),
    )


def build_model_config(args: argparse.Namespace, dataset: Dataset, kind: Optional[ModelKind] = None) -> ModelConfig:
    """ModelConfig matching the dataset's frame size and tabular width."""
    spec = dataset.manifest.spec
    return ModelConfig(
        kind=kind or parse_kind(getattr(args, "model", "tabattention")),
        input_size=(spec.height, spec.width),
        tab_dim=dataset.manifest.tab_dim,
        use_cam=not getattr(args, "no_cam", False),
        use_sam=not getattr(args, "no_sam", False),
        use_tam=not getattr(args, "no_tam", False),
        use_tab=not getattr(args, "no_tab", False),
    )


def _variant_for(config: ModelConfig) -> Variant:
    uses_tab = config.uses_tabular
    return Variant(config.kind.value, {}, config.uses_imaging, uses_tab)


def _echo(run_dir: Path, args: argparse.Namespace, model: Optional[ModelConfig], train: Optional[TrainConfig]):
    storage_service.write_run_config(
        run_dir,
        RunConfig(
            command=args.command,
            dataset=str(args.data),
            output=str(run_dir),
            seed=args.seed,
            model=model,
            train=train,
            extra={"jobs": args.jobs, "full_scale": args.full_scale},
        ),
    )


def cmd_train(args: argparse.Namespace) -> int:
    """Cross-validate one variant; writes checkpoints, fold reports and a summary CSV."""
    dataset = storage_service.read_dataset(args.data)
    model_config = build_model_config(args, dataset)
    train_config = build_train_config(args)
    run_dir = storage_service.get_run_dir(args.out, f"train-{model_config.kind.value}-seed{args.seed}")
    _echo(run_dir, args, model_config, train_config)

    result = evaluation_service.run_cv(
        dataset, model_config, train_config, _variant_for(model_config), run_dir=run_dir, jobs=args.jobs
    )
    evaluation_service.write_cv_result(run_dir, result)
    evaluation_service.write_summary(run_dir / "summary.csv", [result.aggregate])
    evaluation_service.write_fold_table(run_dir / "folds.csv", result.folds)
    print(json.dumps(result.aggregate.model_dump(), sort_keys=True))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    """Recompute held-out metrics from a stored train run."""
    run_dir = Path(args.run)
    dataset = storage_service.read_dataset(args.data)
    reports = evaluation_service.evaluate_run(run_dir, dataset)
    evaluation_service.write_fold_table(run_dir / "eval_summary.csv", reports)
    stored = storage_service.read_json(run_dir / "cv_result.json")
    report = aggregate(
        Variant(stored["aggregate"]["variant"], {}, stored["aggregate"]["img"], stored["aggregate"]["tab"]),
        reports,
        stored["fold_assignment"],
    )
    logger.info("Evaluation finished", extra={"run": str(run_dir), "mMAE": report.mMAE})
    print(json.dumps(report.model_dump(), sort_keys=True))
    return 0


def _run_table(args: argparse.Namespace, variants, reference: str, name: str, columns) -> int:
    dataset = storage_service.read_dataset(args.data)
    base = build_model_config(args, dataset, kind=ModelKind.TABATTENTION)
    train_config = build_train_config(args)
    run_dir = storage_service.get_run_dir(args.out, f"{name}-seed{args.seed}")
    _echo(run_dir, args, base, train_config)

    results = evaluation_service.compare(dataset, base, train_config, variants, reference, jobs=args.jobs)
    storage_service.write_json(run_dir / f"{name}.json", [r.model_dump(mode="json") for r in results])
    storage_service.write_csv(run_dir / f"{name}.csv", columns, [summary_row(r.aggregate) for r in results])
    for result in results:
        print(json.dumps(result.aggregate.model_dump(), sort_keys=True))
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    """Ablation rows under identical seeds and fold partitions."""
    return _run_table(args, ABLATION_VARIANTS, "TabAttention", "ablation", SUMMARY_COLUMNS)


def cmd_compare(args: argparse.Namespace) -> int:
    """Fusion-method comparison rows with paired t-tests against TabAttention."""
    return _run_table(args, COMPARISON_VARIANTS, "tabattention", "comparison", COMPARE_COLUMNS)


def _add_protocol_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", default=str(settings.data_dir), help="Dataset directory")
    parser.add_argument("--out", default=None, help="Run directory (default: runs_dir/<name>)")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--lr", default=None, help="Learning rate, or 'grid' for grid search")
    parser.add_argument("--folds", type=int, default=5)
    parser.add_argument("--augment", action="store_true", help="Enable all clip augmentations")


def register(subparsers, parents) -> None:
    train = subparsers.add_parser("train", parents=parents, help="Cross-validate one model variant")
    _add_protocol_arguments(train)
    train.add_argument("--model", default="tabattention",
                       help="image_only, linreg, late_concat, interactive, daft or tabattention")
    train.add_argument("--no-cam", action="store_true")
    train.add_argument("--no-sam", action="store_true")
    train.add_argument("--no-tam", action="store_true")
    train.add_argument("--no-tab", action="store_true")
    train.set_defaults(handler=cmd_train, writes=True)

    evaluate = subparsers.add_parser("eval", parents=parents, help="Re-evaluate a stored train run")
    evaluate.add_argument("--run", required=True, help="Run directory written by 'train'")
    evaluate.add_argument("--data", default=str(settings.data_dir), help="Dataset directory")
    evaluate.set_defaults(handler=cmd_eval, writes=False)

    ablate = subparsers.add_parser("ablate", parents=parents, help="Attention ablation table")
    _add_protocol_arguments(ablate)
    ablate.set_defaults(handler=cmd_ablate, writes=True)

    compare = subparsers.add_parser("compare", parents=parents, help="Fusion method comparison table")
    _add_protocol_arguments(compare)
    compare.set_defaults(handler=cmd_compare, writes=True)
