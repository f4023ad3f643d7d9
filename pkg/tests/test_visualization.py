"""
test_visualization.py
-------------------------------------------------
Unit tests for the file-only visualisation outputs:
  ✅ Grad-CAM heat maps (range, shape, flat input)
  ✅ Attention overlays with deterministic names
  ✅ Retrieval grids with marked incorrect hits
  ✅ HTML report
-------------------------------------------------
"""

import os
import sys

import numpy as np
import pytest
import torch
from PIL import Image

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from core.backbone import BackboneConfig, ResidualBackbone
from services.identification import RetrievalHit
from ui.grad_cam import default_stages, grad_cam, normalize_heat
from ui.utils.report_exporter import generate_html_report, image_to_base64
from ui.visualizer import (
    INCORRECT_COLOR,
    overlay_heatmap,
    overlay_name,
    render_retrieval_grid,
    save_attention_overlays,
    tensor_to_image,
)


# ========================================
# FIXTURES
# ========================================

@pytest.fixture
def backbone():
    torch.manual_seed(0)
    config = BackboneConfig(
        stem_channels=4, stem_stride=1, stage_widths=[4, 8, 8, 8], blocks_per_stage=[1, 1, 1, 1],
        stage_strides=[1, 2, 2, 2], input_resolution=32, num_classes=3,
    )
    return ResidualBackbone(config).eval()


@pytest.fixture
def face_image(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "query_face.png"
    Image.fromarray(rng.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)).save(path)
    return path


# ========================================
# TEST 1: GRAD-CAM
# ========================================

def test_default_stages_are_the_last_three():
    assert default_stages(4) == [2, 3, 4]
    assert default_stages(2) == [1, 2]
    print("✅ Test passed: default stages")


def test_heat_maps_cover_the_image_in_unit_range(backbone):
    image = torch.randn(3, 32, 32, generator=torch.Generator().manual_seed(1))
    maps = grad_cam(backbone, image)
    assert [m.stage_index for m in maps] == [2, 3, 4]
    for m in maps:
        assert m.heat.shape == (32, 32)
        assert m.heat.min() >= 0.0 and m.heat.max() <= 1.0
        assert 0 <= m.class_index < 3

    forced = grad_cam(backbone, image, stages=[1], class_index=2)
    assert forced[0].class_index == 2
    print("✅ Test passed: heat in [0, 1] at image resolution")


def test_constant_image_gives_flat_heat(backbone):
    maps = grad_cam(backbone, torch.full((3, 32, 32), 0.3))
    for m in maps:
        assert np.all(m.heat == 0.0)
    print("✅ Test passed: no spatial signal on a constant image")


def test_normalize_heat():
    assert np.array_equal(normalize_heat(np.full((4, 4), 2.5)), np.zeros((4, 4)))
    heat = normalize_heat(np.array([[0.0, 1.0], [2.0, 4.0]]))
    assert heat.min() == 0.0 and heat.max() == 1.0 and heat[1, 0] == 0.5
    print("✅ Test passed: min-max rescale")


def test_grad_cam_rejects_batches(backbone):
    with pytest.raises(ValueError):
        grad_cam(backbone, torch.zeros(1, 3, 32, 32))
    print("✅ Test passed: single image only")


# ========================================
# TEST 2: OVERLAYS
# ========================================

def test_three_overlays_with_deterministic_names(backbone, face_image, tmp_path):
    written = save_attention_overlays(backbone, face_image, tmp_path / "overlays", resize=36, crop=32)
    assert [p.name for p in written] == [
        "query_face_stage2.png", "query_face_stage3.png", "query_face_stage4.png",
    ]
    for path in written:
        with Image.open(path) as img:
            assert img.size == (32, 32)

    baseline = save_attention_overlays(backbone, face_image, tmp_path / "overlays", resize=36, crop=32,
                                       prefix="baseline_", stages=[4])
    assert baseline[0].name == overlay_name(face_image, 4, "baseline_") == "baseline_query_face_stage4.png"
    print("✅ Test passed: 3 overlay files")


def test_overlay_heatmap_checks_shape():
    image = tensor_to_image(torch.zeros(3, 8, 8))
    assert image.getpixel((0, 0)) == (128, 128, 128)
    blended = overlay_heatmap(image, np.ones((8, 8)))
    assert blended.size == (8, 8)
    with pytest.raises(ValueError):
        overlay_heatmap(image, np.ones((4, 4)))
    print("✅ Test passed: overlay blending")


# ========================================
# TEST 3: RETRIEVAL GRID AND REPORT
# ========================================

def test_retrieval_grid_marks_incorrect_hits(face_image, tmp_path):
    gallery = tmp_path / "gallery"
    (gallery / "a").mkdir(parents=True)
    (gallery / "b").mkdir(parents=True)
    Image.new("RGB", (20, 20), (0, 0, 255)).save(gallery / "a" / "0.png")
    Image.new("RGB", (20, 20), (0, 0, 255)).save(gallery / "b" / "0.png")
    hits = [
        RetrievalHit(rank=1, source="a/0.png", identity="a", similarity=0.9, correct=True),
        RetrievalHit(rank=2, source="b/0.png", identity="b", similarity=0.5, correct=False),
    ]
    out = render_retrieval_grid(face_image, {"graphjigsaw": hits, "baseline": hits[::-1]}, gallery,
                                tmp_path / "grid.png", tile=32, pad=4)
    with Image.open(out) as img:
        assert img.size == (4 + 3 * 36, 4 + 2 * (32 + 14 + 4))
        pixels = np.asarray(img.convert("RGB")).reshape(-1, 3)
    assert (pixels == np.array(INCORRECT_COLOR)).all(axis=1).any()
    print("✅ Test passed: incorrect hits framed in red")


def test_html_report_embeds_images(face_image, tmp_path):
    assert image_to_base64(tmp_path / "missing.png") == ""
    report = generate_html_report(
        {"Attention overlays": [face_image]},
        tmp_path / "report.html",
        metadata={"checkpoint": "last.pt"},
    )
    text = open(report, encoding="utf-8").read()
    assert "Attention overlays" in text
    assert "data:image/png;base64," in text
    assert "last.pt" in text
    print("✅ Test passed: self-contained HTML report")
