"""
test_backbone.py
-------------------------------------------------
Unit tests for the stage-structured residual backbone:
  ✅ Stage shapes from the stride arithmetic
  ✅ Read-only stage capture
  ✅ Unit-norm, deterministic embeddings
  ✅ Inference parity with and without the jigsaw attached
-------------------------------------------------
"""

import os
import sys

import pytest
import torch

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from core.backbone import BackboneConfig, JigsawClassifier, ResidualBackbone
from core.graph_jigsaw import GraphJigsaw, StageKind
from services.training import load_backbone, save_checkpoint


# ========================================
# FIXTURES
# ========================================

@pytest.fixture
def small_config():
    """Four thin stages on 32x32 inputs: stage outputs 16, 8, 4, 2."""
    return BackboneConfig(
        stem_channels=4,
        stem_stride=2,
        stage_widths=[4, 8, 8, 8],
        blocks_per_stage=[1, 1, 1, 1],
        stage_strides=[1, 2, 2, 2],
        input_resolution=32,
        num_classes=5,
    )


@pytest.fixture
def small_model(small_config):
    torch.manual_seed(0)
    return ResidualBackbone(small_config).eval()


# ========================================
# TEST 1: STAGE SHAPES
# ========================================

def test_stage_sizes_at_224():
    """
    Expected:
    - stride-4 stem and stage strides (1, 2, 2, 2) give 56, 28, 14, 7
    - the forward pass agrees with stage_shapes()
    """
    config = BackboneConfig(stem_channels=4, stage_widths=[4, 4, 4, 4], blocks_per_stage=[1, 1, 1, 1], num_classes=3)
    assert [shape["output"][0] for shape in config.stage_shapes()] == [56, 28, 14, 7]
    assert config.stage_input_channels() == [4, 4, 4, 4]

    torch.manual_seed(0)
    model = ResidualBackbone(config).eval()
    with torch.no_grad():
        logits, capture = model.forward_with_capture(torch.randn(2, 3, 224, 224))
    assert logits.shape == (2, 3)
    assert [capture.stage(s)[1].shape[-1] for s in range(1, 5)] == [56, 28, 14, 7]
    print("✅ Test passed: 56 / 28 / 14 / 7")


def test_backbone_config_rejects_mismatched_stage_lists():
    with pytest.raises(ValueError):
        BackboneConfig(stage_widths=[4, 8], blocks_per_stage=[1], stage_strides=[1, 2])
    print("✅ Test passed: stage lists must line up")


# ========================================
# TEST 2: CAPTURE
# ========================================

def test_capture_is_read_only(small_model):
    images = torch.randn(2, 3, 32, 32)
    with torch.no_grad():
        with_capture, capture = small_model.forward_with_capture(images, capture=True)
        without_capture, none = small_model.forward_with_capture(images, capture=False)
    assert torch.equal(with_capture, without_capture)
    assert none is None
    assert capture.num_stages == 4
    print("✅ Test passed: logits bitwise identical with capture on/off")


def test_capture_chains_stage_boundaries(small_model, small_config):
    with torch.no_grad():
        _, capture = small_model.forward_with_capture(torch.randn(2, 3, 32, 32))
    for s in range(1, 4):
        assert capture.stage(s)[1] is capture.stage(s + 1)[0]
    for s, shapes in enumerate(small_config.stage_shapes(), start=1):
        x_in, x_out = capture.stage(s)
        assert tuple(x_in.shape[-2:]) == shapes["input"]
        assert tuple(x_out.shape[-2:]) == shapes["output"]

    x_in, x_out = capture.feature_maps(2, sample=1)
    assert x_in.kind is StageKind.STAGE_INPUT and x_out.kind is StageKind.STAGE_OUTPUT
    assert torch.equal(x_in.data, capture.stage(2)[0][1])
    print("✅ Test passed: X_out of stage s is X_in of stage s+1")


def test_backbone_rejects_wrong_resolution(small_model):
    with pytest.raises(ValueError):
        small_model(torch.randn(1, 3, 64, 64))
    print("✅ Test passed: input resolution checked")


# ========================================
# TEST 3: EMBEDDINGS
# ========================================

def test_embeddings_are_unit_norm_and_deterministic(small_model):
    images = torch.randn(4, 3, 32, 32)
    first = small_model.embed(images)
    second = small_model.embed(images.clone())
    assert torch.allclose(first.norm(dim=1), torch.ones(4), atol=1e-6)
    assert torch.equal(first, second)
    assert first.shape == (4, 8)

    same = small_model.embed(images[:1].repeat(2, 1, 1, 1))
    assert torch.allclose(same[0], same[1])
    print("✅ Test passed: unit-norm replayable embeddings")


def test_neck_sets_embedding_width(small_config):
    config = small_config.model_copy(update={"embedding_dim": 6})
    model = ResidualBackbone(config).eval()
    assert model.embed(torch.randn(2, 3, 32, 32)).shape == (2, 6)
    print("✅ Test passed: embedding_dim adds a neck")


# ========================================
# TEST 4: INFERENCE PARITY
# ========================================

def test_inference_parity_through_checkpoint(small_model, small_config, tmp_path):
    """
    Expected:
    - a classifier with the jigsaw attached-but-inactive and the jigsaw-free
      backbone loaded from its checkpoint give the same logits on 16 images
    """
    jigsaw = GraphJigsaw.from_backbone(small_config, M=2)
    attached = JigsawClassifier(small_model, jigsaw).eval()
    path = save_checkpoint(
        tmp_path / "parity.pt",
        model=attached,
        backbone_config=small_config,
        optimizer=None,
        scheduler=None,
        iteration=0,
        epoch=0,
        rng={},
        config={},
    )
    bare = load_backbone(path)
    assert not bare.training

    images = torch.randn(16, 3, 32, 32)
    with torch.no_grad():
        assert torch.allclose(attached(images), bare(images), atol=1e-6)
        assert torch.allclose(attached.embed(images), bare.embed(images), atol=1e-6)
    print("✅ Test passed: the jigsaw adds nothing at inference")
