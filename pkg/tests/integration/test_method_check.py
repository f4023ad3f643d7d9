"""
integration/test_method_check.py
-----------------------------------------------
Variant comparison script:
  ✅ Variant sets per ablation axis
  ✅ Summary table and method-check gaps
  ✅ Exit-code wiring on a tiny run (slow)
  ✅ Stage-wise not below the baseline at full desk scale (slow)
-----------------------------------------------
"""

import os
import sys

import pandas as pd
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from scripts.compare_stage_modes import (  # noqa: E402
    BASELINE,
    STAGE_WISE,
    main,
    method_check_gaps,
    summarize,
    variants_for,
)

TINY_CONFIG = """\
model:
  stem_channels: 4
  stem_stride: 1
  stage_widths: [4, 8, 8, 8]
  blocks_per_stage: [1, 1, 1, 1]
  stage_strides: [1, 2, 2, 2]
  input_resolution: 16
jigsaw:
  M: 2
train:
  batch_size: 4
data:
  min_images_per_identity: 1
  resize: 18
  crop: 16
"""


@pytest.fixture
def results():
    return pd.DataFrame([
        {"variant": BASELINE, "seed": 0, "rank1": 0.50, "rank5": 0.9, "val_accuracy": 0.60, "train_accuracy": 0.9},
        {"variant": STAGE_WISE, "seed": 0, "rank1": 0.60, "rank5": 0.9, "val_accuracy": 0.70, "train_accuracy": 0.9},
        {"variant": BASELINE, "seed": 1, "rank1": 0.40, "rank5": 0.8, "val_accuracy": 0.50, "train_accuracy": 0.8},
        {"variant": STAGE_WISE, "seed": 1, "rank1": 0.45, "rank5": 0.8, "val_accuracy": 0.45, "train_accuracy": 0.8},
        {"variant": BASELINE, "seed": 2, "rank1": 0.70, "rank5": 1.0, "val_accuracy": 0.80, "train_accuracy": 1.0},
        {"variant": STAGE_WISE, "seed": 2, "rank1": 0.55, "rank5": 1.0, "val_accuracy": 0.80, "train_accuracy": 1.0},
    ])


# ========================================
# TEST 1: VARIANTS
# ========================================

def test_variants_per_axis():
    method = variants_for("method")
    assert [name for name, _ in method] == [BASELINE, STAGE_WISE]
    assert method[0][1] == {"jigsaw.lambda": 0.0}

    assert [o["jigsaw.M"] for _, o in variants_for("M")] == [2, 3, 4, 5]
    assert len(variants_for("iterations")) == 3

    modes = variants_for("stage_mode", num_stages=4)
    assert [name for name, _ in modes] == [
        "disabled", "stage1", "stage2", "stage3", "stage4", "simultaneous", "stage_wise_progressive",
    ]
    assert modes[2][1] == {"jigsaw.stage_mode": "single_stage", "jigsaw.stage": 2}

    with pytest.raises(ValueError):
        variants_for("optimizer")
    print("✅ Test passed: variant sets")


# ========================================
# TEST 2: SUMMARY AND GAPS
# ========================================

def test_summary_table(results):
    table = summarize(results).set_index("variant")
    assert table.loc[BASELINE, "median_rank1"] == pytest.approx(0.50)
    assert table.loc[STAGE_WISE, "median_rank1"] == pytest.approx(0.55)
    assert table.loc[BASELINE, "runs"] == 3
    assert table.loc[STAGE_WISE, "mean_val_accuracy"] == pytest.approx((0.70 + 0.45 + 0.80) / 3)
    print("✅ Test passed: per-variant medians and means")


def test_method_check_gaps(results):
    rank_gap, acc_gap = method_check_gaps(results)
    assert rank_gap == pytest.approx(0.05)
    assert acc_gap == pytest.approx((0.10 - 0.05 + 0.0) / 3)

    worse = results.assign(rank1=results["rank1"].where(results["variant"] == BASELINE, 0.0))
    assert method_check_gaps(worse)[0] == pytest.approx(-0.50)
    print("✅ Test passed: Rank@1 and accuracy gaps")


# ========================================
# TEST 3: FULL RUN
# ========================================

@pytest.mark.slow
def test_tiny_method_check_exit_code(tmp_path):
    """
    Expected:
    - one row per variant and seed in results_method.csv
    - exit code 1 exactly when the median Rank@1 gap is negative
    """
    config = tmp_path / "tiny.yaml"
    config.write_text(TINY_CONFIG, encoding="utf-8")
    code = main([
        "--config", str(config), "--work-dir", str(tmp_path / "work"), "--epochs", "1", "--seeds", "0",
        "--num-classes", "4", "--trained-classes", "3", "--images-per-class", "10", "--resolution", "16",
    ])

    frame = pd.read_csv(tmp_path / "work" / "results_method.csv")
    assert sorted(frame["variant"]) == sorted([BASELINE, STAGE_WISE])
    assert frame["rank1"].between(0.0, 1.0).all()
    assert (tmp_path / "work" / "summary_method.csv").exists()

    rank_gap, _ = method_check_gaps(frame)
    assert code == (1 if rank_gap < 0 else 0)
    print(f"✅ Test passed: method check exit {code} (gap {rank_gap:+.4f})")


@pytest.mark.slow
def test_method_check_non_inferiority(tmp_path):
    """
    Expected:
    - default run: 30 synthetic identities, 20 trained, 100 images at 64x64,
      20 epochs, seeds 0 1 2, shipped synthetic config
    - median Rank@1 of the stage-wise model is not below the baseline, exit 0
    """
    code = main(["--work-dir", str(tmp_path / "work")])

    frame = pd.read_csv(tmp_path / "work" / "results_method.csv")
    assert len(frame) == 6
    assert sorted(frame["seed"].unique().tolist()) == [0, 1, 2]

    rank_gap, acc_gap = method_check_gaps(frame)
    assert rank_gap >= 0.0
    assert code == 0
    print(f"✅ Test passed: method check gap {rank_gap:+.4f} (accuracy {acc_gap:+.4f})")
