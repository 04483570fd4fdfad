"""Dataset generation command."""

import argparse
import json
from pathlib import Path
from typing import Tuple

import numpy as np

from ..core.config import settings
from ..core.errors import ValidationFailedError
from ..models.schemas import RunConfig, SyntheticTaskSpec
from ..services.datagen_service import datagen_service
from ..services.storage_service import storage_service


FULL_SCALE_SIZE = (128, 128)


def parse_frames(value: str) -> Tuple[int, int]:
    """``"T"`` or ``"MIN-MAX"``."""
    try:
        if "-" in value:
            low, high = value.split("-", 1)
            return int(low), int(high)
        return int(value), int(value)
    except ValueError:
        raise ValidationFailedError(f"Invalid --frames '{value}'; expected T or MIN-MAX.") from None


def parse_size(value: str) -> Tuple[int, int]:
    """``"HxW"``."""
    try:
        height, width = value.lower().split("x", 1)
        return int(height), int(width)
    except ValueError:
        raise ValidationFailedError(f"Invalid --size '{value}'; expected HxW.") from None


def cmd_gen_data(args: argparse.Namespace) -> int:
    """Generate a synthetic dataset directory and print its summary."""
    frames_min, frames_max = parse_frames(args.frames)
    height, width = FULL_SCALE_SIZE if args.full_scale and args.size is None else parse_size(args.size or "64x64")
    spec = SyntheticTaskSpec(
        n_samples=args.n,
        frames_min=frames_min,
        frames_max=frames_max,
        height=height,
        width=width,
        tab_dim=args.tab_dim,
        a_img=args.a_img,
        a_tab=args.a_tab,
        noise_std=args.noise_std,
        redundancy=args.redundancy,
    )
    out_dir = Path(args.out) if args.out else settings.data_dir
    dataset = datagen_service.generate(spec, args.seed, jobs=args.jobs)
    storage_service.write_dataset(dataset, out_dir)
    storage_service.write_run_config(
        out_dir, RunConfig(command="gen-data", output=str(out_dir), seed=args.seed, extra={"spec": spec.model_dump()})
    )

    targets = dataset.targets
    summary = {
        "path": str(out_dir),
        "n_samples": len(dataset),
        "tab_dim": spec.tab_dim,
        "seed": args.seed,
        "frames": [int(min(s.frames for s in dataset.samples)), int(max(s.frames for s in dataset.samples))],
        "target_mean": float(np.mean(targets)),
        "target_std": float(np.std(targets)),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("gen-data", parents=parents, help="Generate a synthetic video+tabular dataset")
    parser.add_argument("--out", default=None, help="Output directory (default: data_dir)")
    parser.add_argument("--n", type=int, default=96, help="Number of samples")
    parser.add_argument("--redundancy", type=float, default=0.5, help="Correlation of tab features with the image")
    parser.add_argument("--frames", default="16-48", help="Frames per clip: T or MIN-MAX")
    parser.add_argument("--size", default=None, help="Frame size HxW (default 64x64)")
    parser.add_argument("--tab-dim", type=int, default=6)
    parser.add_argument("--a-img", type=float, default=1000.0)
    parser.add_argument("--a-tab", type=float, default=800.0)
    parser.add_argument("--noise-std", type=float, default=50.0)
    parser.set_defaults(handler=cmd_gen_data, writes=True)
