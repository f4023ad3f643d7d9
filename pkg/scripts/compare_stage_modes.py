"""
Compare GraphJigsaw Variants on the Synthetic Shape Dataset

Default (--axis method) is the scaled-down method check:
    30 synthetic identities x 100 images at 64x64
    20 identities trained (80/20 per-identity split), 10 held out as distractors
    lambda = 0 baseline vs stage-wise GraphJigsaw, 20 epochs, seeds 0 1 2
    -> median Rank@1 per variant and the mean held-out accuracy gap
    -> exit code 1 if the median Rank@1 gap is negative

Ablation axes:
    --axis M            grid sizes 2..5 (sizes that do not fit are skipped)
    --axis iterations   (t_enc, t_dec) in (1,1) (1,2) (2,1)
    --axis stage_mode   disabled, single_stage 1..S, simultaneous, stage_wise_progressive

Usage:
    python scripts/compare_stage_modes.py --work-dir runs/method_check
    python scripts/compare_stage_modes.py --axis M --epochs 10 --seeds 0
"""

import argparse
import sys
from pathlib import Path
from statistics import mean, median
from typing import Dict, List, Optional, Sequence, Tuple

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import pandas as pd  # noqa: E402

from core.errors import ConfigError  # noqa: E402
from services.data_pipeline import (  # noqa: E402
    IdentityImageDataset,
    generate_synthetic,
    scan_dataset,
    split_per_identity,
)
from services.identification import embed_manifest, evaluate_identification  # noqa: E402
from services.training import load_backbone, load_config, train  # noqa: E402

DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "synthetic.yaml"
BASELINE = "baseline"
STAGE_WISE = "stage_wise"

Variant = Tuple[str, Dict[str, object]]


def variants_for(axis: str, num_stages: int = 4) -> List[Variant]:
    """Named override sets to compare along one axis."""
    if axis == "method":
        return [
            (BASELINE, {"jigsaw.lambda": 0.0}),
            (STAGE_WISE, {"jigsaw.stage_mode": "stage_wise_progressive"}),
        ]
    if axis == "M":
        return [(f"M={m}", {"jigsaw.M": m}) for m in range(2, 6)]
    if axis == "iterations":
        return [(f"T_enc={e},T_dec={d}", {"jigsaw.t_enc": e, "jigsaw.t_dec": d}) for e, d in ((1, 1), (1, 2), (2, 1))]
    if axis == "stage_mode":
        variants: List[Variant] = [("disabled", {"jigsaw.stage_mode": "disabled"})]
        variants += [(f"stage{s}", {"jigsaw.stage_mode": "single_stage", "jigsaw.stage": s}) for s in range(1, num_stages + 1)]
        variants += [
            ("simultaneous", {"jigsaw.stage_mode": "simultaneous"}),
            ("stage_wise_progressive", {"jigsaw.stage_mode": "stage_wise_progressive"}),
        ]
        return variants
    raise ValueError(f"Unknown axis: {axis}")


def prepare_data(work_dir: Path, num_classes: int, trained_classes: int, images_per_class: int, resolution: int, seed: int):
    """Synthesize once, then split identities into trained / distractor and images into train / probe."""
    data_root = work_dir / "data"
    if not (data_root / "attributes.json").exists():
        generate_synthetic(data_root, num_classes, images_per_class, resolution, seed)
    manifest = scan_dataset(data_root, min_images=1)
    trained = manifest.select(manifest.identities[:trained_classes], split="train")
    distractors = manifest.select(manifest.identities[trained_classes:], split="distractor")
    train_manifest, probe_manifest = split_per_identity(trained, holdout_fraction=0.2, seed=seed)
    return data_root, train_manifest, probe_manifest, distractors


def run_variant(name: str, overrides: Dict[str, object], seed: int, data, args: argparse.Namespace) -> Optional[Dict[str, object]]:
    data_root, train_manifest, probe_manifest, distractors = data
    settings = {**overrides, "train.seed": seed, "train.epochs": args.epochs, "data.root": str(data_root)}
    try:
        config = load_config(args.config, settings)
    except ConfigError as e:
        print(f"❌ {name} (seed {seed}): {e}; skipping")
        return None

    resize, crop = config.data.resize, config.data.crop
    train_ds = IdentityImageDataset(train_manifest, train=True, resize=resize, crop=crop, seed=seed)
    val_ds = IdentityImageDataset(probe_manifest, train=False, resize=resize, crop=crop, seed=seed)
    run_dir = args.work_dir / "runs" / f"{name.replace(',', '_').replace('=', '')}_seed{seed}"

    print(f"🔄 {name} (seed {seed})")
    result = train(train_ds, config, run_dir, val_dataset=val_ds)
    backbone = load_backbone(result.checkpoint)
    probes = embed_manifest(backbone, probe_manifest, resize, crop)
    gallery = embed_manifest(backbone, distractors, resize, crop)
    report = evaluate_identification(probes, gallery, ks=(1, 5))
    return {
        "variant": name,
        "seed": seed,
        "rank1": report.summary["rank1"],
        "rank5": report.summary["rank5"],
        "val_accuracy": result.val_accuracy,
        "train_accuracy": result.final_train_accuracy,
    }


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    return (
        frame.groupby("variant", sort=False)
        .agg(median_rank1=("rank1", "median"), mean_rank5=("rank5", "mean"), mean_val_accuracy=("val_accuracy", "mean"), runs=("seed", "count"))
        .reset_index()
    )


def method_check_gaps(frame: pd.DataFrame) -> Tuple[float, float]:
    """(median Rank@1 gap, mean held-out accuracy gap) of stage-wise over baseline."""
    base = frame[frame["variant"] == BASELINE]
    ours = frame[frame["variant"] == STAGE_WISE]
    rank_gap = median(ours["rank1"]) - median(base["rank1"])
    paired = base.merge(ours, on="seed", suffixes=("_base", "_ours"))
    acc_gap = mean(paired["val_accuracy_ours"] - paired["val_accuracy_base"]) if len(paired) else float("nan")
    return rank_gap, acc_gap


def main(argv: Optional[Sequence[str]] = None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--axis", choices=["method", "M", "iterations", "stage_mode"], default="method")
    p.add_argument("--config", type=Path, default=DEFAULT_CONFIG)
    p.add_argument("--work-dir", type=Path, default=Path("runs/compare_stage_modes"))
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--num-classes", type=int, default=30)
    p.add_argument("--trained-classes", type=int, default=20)
    p.add_argument("--images-per-class", type=int, default=100)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--data-seed", type=int, default=0)
    args = p.parse_args(argv)

    if not 1 <= args.trained_classes < args.num_classes:
        p.error("--trained-classes must leave at least one distractor identity")

    print("=" * 80)
    print(f"🧪 GRAPHJIGSAW COMPARISON: axis={args.axis}")
    print("=" * 80)

    data = prepare_data(args.work_dir, args.num_classes, args.trained_classes,
                        args.images_per_class, args.resolution, args.data_seed)
    rows = []
    for seed in args.seeds:
        for name, overrides in variants_for(args.axis):
            row = run_variant(name, overrides, seed, data, args)
            if row is not None:
                rows.append(row)

    if not rows:
        print("No results to compare.")
        return 1

    frame = pd.DataFrame(rows)
    frame.to_csv(args.work_dir / f"results_{args.axis}.csv", index=False, lineterminator="\n")
    table = summarize(frame)
    table.to_csv(args.work_dir / f"summary_{args.axis}.csv", index=False, lineterminator="\n")

    print()
    print("=" * 80)
    print("📊 SUMMARY")
    print("=" * 80)
    for i, row in enumerate(table.sort_values("median_rank1", ascending=False).itertuples(), 1):
        print(f"   {i}. {row.variant}: median Rank@1 {row.median_rank1:.4f}, "
              f"mean val acc {row.mean_val_accuracy:.4f} ({row.runs} run(s))")

    if args.axis == "method":
        rank_gap, acc_gap = method_check_gaps(frame)
        print()
        print(f"🎯 Median Rank@1 gap (stage-wise - baseline): {rank_gap:+.4f}")
        print(f"🎯 Mean held-out accuracy gap:                {acc_gap:+.4f}")
        if rank_gap < 0:
            print("❌ Stage-wise GraphJigsaw is below the baseline")
            return 1
        print("✅ Stage-wise GraphJigsaw is not inferior to the baseline")
    return 0


if __name__ == "__main__":
    sys.exit(main())
