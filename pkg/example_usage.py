#!/usr/bin/env python3
"""
Example usage of the TabAttention Lab services from Python.

This script demonstrates the complete workflow without the CLI:
1. Generate a small synthetic dataset
2. Build a TabAttention model and inspect its attention stages
3. Cross-validate it against the image-only baseline
4. Compare the two with a paired t-test
"""

import sys
from pathlib import Path

# Add src to path for local development
sys.path.insert(0, str(Path(__file__).parent))

from src.core.errors import TabAttentionError
from src.fusion import Variant, build_model
from src.models.schemas import ModelConfig, ModelKind, SyntheticTaskSpec, TrainConfig
from src.services.datagen_service import datagen_service
from src.services.evaluation_service import evaluation_service


def main():
    """Run example workflow."""
    print("🚀 TabAttention Lab Example Workflow\n")

    # Step 1: Data
    print("🎞️  Step 1: Generate data")
    spec = SyntheticTaskSpec(n_samples=20, frames_min=16, frames_max=24, height=32, width=32, tab_dim=4)
    try:
        dataset = datagen_service.generate(spec, seed=0, jobs=1)
    except TabAttentionError as e:
        print(f"   ✗ Generation failed: {e.message}")
        return
    targets = dataset.targets
    print(f"   ✓ {len(dataset)} clips, targets {targets.min():.1f} to {targets.max():.1f}\n")

    # Step 2: Model
    print("🧠 Step 2: Build TabAttention")
    config = ModelConfig(kind=ModelKind.TABATTENTION, stages=2, widths=(8, 16), z=4,
                         input_size=(32, 32), tab_dim=spec.tab_dim)
    model = build_model(config, seed=0)
    n_params = sum(p.value.data.size for p in model.parameters())
    print(f"   ✓ {n_params:,} trainable parameters\n")

    # Step 3: Cross-validation
    print("🏋️  Step 3: Cross-validate (3 folds, 2 epochs)")
    train_config = TrainConfig(folds=3, epochs=2, batch_size=4, lr=1e-3, seed=0)
    variants = [
        Variant("image_only", {"kind": ModelKind.IMAGE_ONLY}, True, False),
        Variant("tabattention", {}, True, True),
    ]
    try:
        results = evaluation_service.compare(dataset, config, train_config, variants, reference="tabattention")
    except TabAttentionError as e:
        print(f"   ✗ Training failed: {e.code}: {e.message}")
        return

    # Step 4: Report
    print("\n📊 Results:")
    for result in results:
        report = result.aggregate
        p_value = "-" if report.p_value is None else f"{report.p_value:.3f}"
        print(f"   {report.variant:<14} mMAE {report.mMAE:8.2f} ± {report.sMAE:6.2f}   "
              f"mMAPE {report.mMAPE:6.2f}%   p {p_value}")

    print("\n✅ Example workflow completed successfully!")


if __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        print("\n\n⚠️  Interrupted by user")
        sys.exit(1)
