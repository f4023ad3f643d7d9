"""
integration/test_cli_sanity.py
-----------------------------------------------
End-to-end sanity run of the command line on a
tiny synthetic dataset:

    synthesize -> train -> eval -> visualize -> retrieve

plus exit codes for configuration / data errors.
-----------------------------------------------
"""

import json
import os
import sys
from pathlib import Path

import pandas as pd
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from scripts.graphjigsaw import main, parse_overrides  # noqa: E402
from core.errors import ConfigError  # noqa: E402

pytestmark = pytest.mark.sanity

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
  epochs: 2
  batch_size: 4
data:
  min_images_per_identity: 1
  resize: 18
  crop: 16
"""


def only_run_dir(runs: Path) -> Path:
    run_dirs = sorted(p for p in runs.iterdir() if p.is_dir() and p.name.startswith("train_"))
    assert len(run_dirs) == 1
    return run_dirs[0]


# ========================================
# FIXTURES
# ========================================

@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthesized probe/distractor roots, a tiny config and one trained run."""
    root = tmp_path_factory.mktemp("cli")
    config = root / "tiny.yaml"
    config.write_text(TINY_CONFIG, encoding="utf-8")

    assert main(["synthesize", "--out", str(root / "data"), "--num-classes", "3",
                 "--images-per-class", "4", "--resolution", "16", "--seed", "0"]) == 0
    assert main(["synthesize", "--out", str(root / "distractors"), "--num-classes", "2",
                 "--images-per-class", "2", "--resolution", "16", "--seed", "9"]) == 0
    # distractor identities must not share names with the probe identities
    for folder in sorted(p for p in (root / "distractors").iterdir() if p.is_dir()):
        folder.rename(folder.with_name("other_" + folder.name))

    assert main(["train", "--config", str(config), "--out", str(root / "runs"),
                 "--data.root", str(root / "data"), "--seed", "7"]) == 0
    run_dir = only_run_dir(root / "runs")
    return {
        "root": root,
        "config": config,
        "data": root / "data",
        "distractors": root / "distractors",
        "run_dir": run_dir,
        "checkpoint": run_dir / "checkpoints" / "last.pt",
    }


# ========================================
# TEST 1: TRAIN
# ========================================

def test_train_outputs(workspace):
    run_dir = workspace["run_dir"]
    for name in ("config.yaml", "metrics.csv", "summary.json", "checkpoints/last.pt", "checkpoints/epoch_001.pt"):
        assert (run_dir / name).exists(), name

    metrics = pd.read_csv(run_dir / "metrics.csv", dtype=str, keep_default_na=False)
    assert len(metrics) == 6
    assert metrics["stage_active"].tolist() == ["1", "2", "3", "4", "1", "2"]
    assert all(value != "" for value in metrics["loss_jig"])

    index = json.loads((workspace["root"] / "runs" / "run.json").read_text(encoding="utf-8"))
    assert index["command"] == "train" and index["seed"] == 7
    print("✅ Test passed: train writes config, metrics, checkpoints and run.json")


def test_lambda_zero_and_seed_replay(workspace, tmp_path):
    base = ["train", "--config", str(workspace["config"]), "--data.root", str(workspace["data"])]
    assert main(base + ["--out", str(tmp_path / "baseline"), "--jigsaw.lambda", "0"]) == 0
    baseline = pd.read_csv(only_run_dir(tmp_path / "baseline") / "metrics.csv", dtype=str, keep_default_na=False)
    assert set(baseline["loss_jig"]) == {""}

    assert main(base + ["--out", str(tmp_path / "first"), "--seed", "7"]) == 0
    assert main(base + ["--out", str(tmp_path / "second"), "--seed", "7"]) == 0
    first = (only_run_dir(tmp_path / "first") / "metrics.csv").read_bytes()
    second = (only_run_dir(tmp_path / "second") / "metrics.csv").read_bytes()
    assert first == second
    assert first == (workspace["run_dir"] / "metrics.csv").read_bytes()
    print("✅ Test passed: baseline run logs no jigsaw term; same seed, same metrics")


# ========================================
# TEST 2: EVAL
# ========================================

def test_eval_summary_and_replay(workspace, tmp_path):
    args = ["eval", "--checkpoint", str(workspace["checkpoint"]),
            "--probe-root", str(workspace["data"]), "--distractor-root", str(workspace["distractors"])]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0

    summary = json.loads((tmp_path / "a" / "summary.json").read_text(encoding="utf-8"))
    assert set(summary) == {"rank1", "rank5", "rank10", "num_probes"}
    assert summary["num_probes"] == 3 * 4 * 3
    assert 0.0 <= summary["rank1"] <= summary["rank5"] <= summary["rank10"] == 1.0
    for name in ("summary.json", "cmc.csv", "probe_embeddings.tsv", "distractor_embeddings.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    assert (tmp_path / "a" / "cmc.png").exists()

    assert main(["eval", "--probe-dump", str(tmp_path / "a" / "probe_embeddings.tsv"),
                 "--distractor-dump", str(tmp_path / "a" / "distractor_embeddings.tsv"),
                 "--out", str(tmp_path / "dumps")]) == 0
    from_dumps = json.loads((tmp_path / "dumps" / "summary.json").read_text(encoding="utf-8"))
    assert from_dumps["num_probes"] == summary["num_probes"]
    # dumps are rounded to 8 decimals, which may reorder at most a near-tie
    for key in ("rank1", "rank5", "rank10"):
        assert abs(from_dumps[key] - summary[key]) <= 1 / summary["num_probes"] + 1e-12
    print("✅ Test passed: rank1/rank5/rank10/num_probes, deterministic eval")


def test_run_index_is_byte_identical_on_rerun(workspace, tmp_path):
    args = ["synthesize", "--out", str(tmp_path / "synth"), "--num-classes", "2",
            "--images-per-class", "2", "--resolution", "16", "--seed", "3"]
    assert main(args) == 0
    first = (tmp_path / "synth" / "run.json").read_bytes()
    assert main(args) == 0
    assert (tmp_path / "synth" / "run.json").read_bytes() == first

    index = json.loads(first.decode("utf-8"))
    assert set(index) == {"command", "arguments", "outputs", "seed"}
    assert index["command"] == "synthesize" and index["seed"] == 3
    print("✅ Test passed: same command, same run.json")


# ========================================
# TEST 3: VISUALIZE AND RETRIEVE
# ========================================

def test_visualize_and_retrieve(workspace, tmp_path):
    images = [str(workspace["data"] / "id_000" / "0000.png"), str(workspace["data"] / "id_001" / "0001.png")]
    assert main(["visualize", "--checkpoint", str(workspace["checkpoint"]),
                 "--baseline-checkpoint", str(workspace["checkpoint"]),
                 "--images", *images, "--gallery-root", str(workspace["data"]), "--top-k", "3",
                 "--out", str(tmp_path / "vis")]) == 0
    overlays = sorted(p.name for p in (tmp_path / "vis" / "overlays").iterdir())
    assert len(overlays) == 2 * 2 * 3
    assert "0000_stage2.png" in overlays and "baseline_0001_stage4.png" in overlays
    assert sorted(p.name for p in (tmp_path / "vis" / "retrieval").iterdir()) == ["0000_grid.png", "0001_grid.png"]
    assert (tmp_path / "vis" / "report.html").exists()

    assert main(["retrieve", "--checkpoint", str(workspace["checkpoint"]), "--queries", images[0],
                 "--gallery-root", str(workspace["data"]), "--top-k", "3", "--out", str(tmp_path / "ret")]) == 0
    results = json.loads((tmp_path / "ret" / "retrieval.json").read_text(encoding="utf-8"))
    hits = results[images[0]]
    assert [h["rank"] for h in hits] == [1, 2, 3]
    assert all(h["source"] != "id_000/0000.png" for h in hits)
    print("✅ Test passed: overlays, grids, report and retrieval.json")


# ========================================
# TEST 4: EXIT CODES
# ========================================

def test_missing_data_root_is_a_config_error(workspace, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("GRAPHJIGSAW_DATA_ROOT", raising=False)
    code = main(["train", "--config", str(workspace["config"]), "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "data.root" in err[0]
    print("✅ Test passed: missing data.root -> exit 2, one-line diagnostic")


def test_error_exit_codes(workspace, tmp_path):
    base = ["train", "--config", str(workspace["config"]), "--out", str(tmp_path)]
    assert main(base + ["--data.root", str(workspace["data"]), "--jigsaw.bogus", "1"]) == 2
    assert main(base + ["--data.root", str(tmp_path / "nowhere")]) == 3
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.pt"), "--probe-root", str(workspace["data"]),
                 "--distractor-root", str(workspace["distractors"]), "--out", str(tmp_path)]) == 3
    assert main(["eval", "--probe-root", str(workspace["data"]), "--out", str(tmp_path)]) == 2
    assert main(["eval", "--unknown.flag", "1", "--out", str(tmp_path)]) == 2
    # probe identities reused as distractors
    assert main(["eval", "--checkpoint", str(workspace["checkpoint"]), "--probe-root", str(workspace["data"]),
                 "--distractor-root", str(workspace["data"]), "--out", str(tmp_path)]) == 3
    print("✅ Test passed: exit codes 2 / 3")


def test_parse_overrides():
    assert parse_overrides(["--jigsaw.M", "4", "--train.seed=3"]) == [("jigsaw.M", "4"), ("train.seed", "3")]
    with pytest.raises(ConfigError):
        parse_overrides(["--jigsaw.M"])
    with pytest.raises(ConfigError):
        parse_overrides(["stray"])
    print("✅ Test passed: dotted overrides")
