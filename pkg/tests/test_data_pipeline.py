"""
test_data_pipeline.py
-------------------------------------------------
Unit tests for the data pipeline:
  ✅ Dataset scan (filters, unreadable files, replay)
  ✅ Per-identity hold-out split
  ✅ Train / eval transforms
  ✅ Identity dataset and loader
  ✅ Synthetic cartoon-face generator
-------------------------------------------------
"""

import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from core.errors import DataError
from services.data_pipeline import (
    DatasetManifest,
    IdentityImageDataset,
    augment,
    denormalize,
    generate_synthetic,
    load_rgb,
    make_loader,
    scan_dataset,
    split_per_identity,
)
from services.data_pipeline.synthetic import attribute_space, sample_identities


def write_image(path: Path, color=(120, 60, 200), size=(20, 20)) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new("RGB", size, color).save(path)
    return path


def tree_digest(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*.png")):
        digest.update(path.relative_to(root).as_posix().encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


# ========================================
# FIXTURES
# ========================================

@pytest.fixture
def small_root(tmp_path):
    """Identity a with 3 images, identity b with 2."""
    root = tmp_path / "faces"
    for i in range(3):
        write_image(root / "a" / f"{i}.png", color=(10 * i, 20, 30))
    for i in range(2):
        write_image(root / "b" / f"{i}.jpg", color=(200, 10 * i, 30))
    return root


# ========================================
# TEST 1: SCAN
# ========================================

def test_scan_counts_and_filter(small_root):
    manifest = scan_dataset(small_root, min_images=1)
    assert len(manifest) == 5 and manifest.num_classes == 2
    assert manifest.identities == ["a", "b"]
    assert manifest.samples[0] == ("a/0.png", 0)
    assert manifest.images_per_identity == {"a": 3, "b": 2}

    filtered = scan_dataset(small_root, min_images=3)
    assert filtered.identities == ["a"] and len(filtered) == 3
    print("✅ Test passed: 5 samples / 2 classes, filter keeps a")


def test_scan_is_replayable(small_root, tmp_path):
    first = scan_dataset(small_root).to_csv(tmp_path / "one.csv")
    second = scan_dataset(small_root).to_csv(tmp_path / "two.csv")
    assert first.read_bytes() == second.read_bytes()

    cached = DatasetManifest.from_csv(first, small_root)
    assert cached.samples == scan_dataset(small_root).samples
    print("✅ Test passed: identical manifests byte-for-byte")


def test_scan_skips_unreadable_images(small_root):
    (small_root / "a" / "broken.png").write_bytes(b"not an image")
    manifest = scan_dataset(small_root)
    assert manifest.skipped == 1
    assert len(manifest) == 5
    print("✅ Test passed: unreadable files skipped and counted")


def test_scan_errors(tmp_path):
    with pytest.raises(DataError):
        scan_dataset(tmp_path / "missing")
    (tmp_path / "empty" / "a").mkdir(parents=True)
    with pytest.raises(DataError):
        scan_dataset(tmp_path / "empty")
    print("✅ Test passed: missing and empty roots")


def test_select_reindexes_identities(small_root):
    manifest = scan_dataset(small_root)
    only_b = manifest.select(["b"], split="distractor")
    assert only_b.identities == ["b"] and {label for _, label in only_b.samples} == {0}
    assert only_b.split == "distractor"
    with pytest.raises(DataError):
        manifest.select(["zz"])
    print("✅ Test passed: select re-indexes densely")


def test_split_per_identity_is_deterministic(small_root):
    manifest = scan_dataset(small_root)
    kept, held = split_per_identity(manifest, 0.4, seed=3)
    again_kept, again_held = split_per_identity(manifest, 0.4, seed=3)
    assert kept.samples == again_kept.samples and held.samples == again_held.samples
    assert set(kept.samples).isdisjoint(held.samples)
    assert len(kept) + len(held) == 5
    # every identity keeps at least one image on each side
    assert {label for _, label in kept.samples} == {0, 1} == {label for _, label in held.samples}
    assert held.split == "probe"
    print("✅ Test passed: per-identity split")


# ========================================
# TEST 2: TRANSFORMS
# ========================================

def test_eval_transform_on_constant_image():
    image = Image.new("RGB", (40, 30), (255, 0, 51))
    tensor = augment(image, train=False, resize=32, crop=24)
    assert tensor.shape == (3, 24, 24)
    expected = torch.tensor([1.0, -1.0, 51 / 255 * 2 - 1]).view(3, 1, 1).expand(3, 24, 24)
    assert torch.allclose(tensor, expected, atol=1e-6)
    assert torch.allclose(denormalize(tensor)[:, 0, 0], torch.tensor([1.0, 0.0, 0.2]), atol=1e-6)
    print("✅ Test passed: constant image -> constant normalised tensor")


def test_train_transform_replays_with_seed():
    rng = np.random.default_rng(0)
    image = Image.fromarray(rng.integers(0, 256, size=(36, 36, 3), dtype=np.uint8))
    first = torch.Generator().manual_seed(5)
    second = torch.Generator().manual_seed(5)
    for _ in range(5):
        a = augment(image, train=True, generator=first, resize=32, crop=24)
        b = augment(image, train=True, generator=second, resize=32, crop=24)
        assert torch.equal(a, b)
    with pytest.raises(ValueError):
        augment(image, crop=40, resize=32)
    print("✅ Test passed: identical crop/flip sequence per seed")


def test_load_rgb_rejects_corrupt_file(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"\x89PNG broken")
    with pytest.raises(DataError):
        load_rgb(bad)
    gray = tmp_path / "gray.png"
    Image.new("L", (4, 4), 128).save(gray)
    assert load_rgb(gray).mode == "RGB"
    print("✅ Test passed: corrupt images raise DataError")


# ========================================
# TEST 3: DATASET AND LOADER
# ========================================

def test_identity_dataset_items_and_replay(small_root):
    manifest = scan_dataset(small_root)
    dataset = IdentityImageDataset(manifest, train=True, resize=16, crop=12, seed=1)
    tensor, label, index = dataset[3]
    assert tensor.shape == (3, 12, 12) and label == 1 and index == 3
    assert torch.equal(dataset[3][0], tensor)

    loader = make_loader(dataset, batch_size=2, shuffle=False)
    batches = list(loader)
    assert [b[0].shape[0] for b in batches] == [2, 2, 1]
    assert torch.cat([b[1] for b in batches]).tolist() == [0, 0, 0, 1, 1]
    print("✅ Test passed: dataset items and loader batches")


# ========================================
# TEST 4: SYNTHETIC GENERATOR
# ========================================

def test_synthetic_layout(tmp_path):
    result = generate_synthetic(tmp_path / "syn", num_classes=2, images_per_class=3, resolution=32, seed=0)
    files = sorted((tmp_path / "syn").rglob("*.png"))
    assert len(files) == 6 and result.num_images == 6
    assert sorted(p.name for p in (tmp_path / "syn").iterdir() if p.is_dir()) == ["id_000", "id_001"]
    with Image.open(files[0]) as img:
        assert img.size == (32, 32) and img.mode == "RGB"

    attributes = json.loads((tmp_path / "syn" / "attributes.json").read_text(encoding="utf-8"))
    assert set(attributes) == {"id_000", "id_001"}
    assert scan_dataset(tmp_path / "syn").num_classes == 2
    print("✅ Test passed: 6 files in 2 identity folders")


def test_synthetic_is_deterministic(tmp_path):
    generate_synthetic(tmp_path / "one", num_classes=3, images_per_class=2, resolution=24, seed=4)
    generate_synthetic(tmp_path / "two", num_classes=3, images_per_class=2, resolution=24, seed=4)
    generate_synthetic(tmp_path / "other", num_classes=3, images_per_class=2, resolution=24, seed=5)
    assert tree_digest(tmp_path / "one") == tree_digest(tmp_path / "two")
    assert tree_digest(tmp_path / "one") != tree_digest(tmp_path / "other")
    print("✅ Test passed: same seed, identical pixels")


def test_synthetic_identities_have_distinct_attributes():
    space = attribute_space()
    assert len(space) == len({a.as_tuple() for a in space}) == 6 * 6 * 6 * 5
    for seed in range(5):
        identities = sample_identities(200, seed)
        assert len({a.as_tuple() for a in identities}) == 200
    with pytest.raises(ValueError):
        sample_identities(len(space) + 1, 0)
    with pytest.raises(ValueError):
        generate_synthetic(Path("unused"), num_classes=1, images_per_class=1, resolution=4)
    print("✅ Test passed: no attribute-tuple collisions")


def test_synthetic_colour_statistics_do_not_identify(tmp_path):
    """
    Expected:
    - per-channel colour histograms of different identities overlap
      strongly (mean histogram intersection > 0.7)
    """
    generate_synthetic(tmp_path / "syn", num_classes=3, images_per_class=100, resolution=16, seed=0)
    histograms = []
    for folder in sorted(p for p in (tmp_path / "syn").iterdir() if p.is_dir()):
        pixels = np.concatenate([np.asarray(Image.open(f)).reshape(-1, 3) for f in sorted(folder.glob("*.png"))])
        histograms.append(np.stack([
            np.histogram(pixels[:, c], bins=8, range=(0, 256))[0] / len(pixels) for c in range(3)
        ]))
    overlaps = [
        np.minimum(histograms[i], histograms[j]).sum(axis=1).mean()
        for i in range(3) for j in range(i + 1, 3)
    ]
    assert min(overlaps) > 0.7
    print(f"✅ Test passed: colour histogram overlap {min(overlaps):.3f}")
