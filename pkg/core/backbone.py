"""
core/backbone.py
-------------------------------------------------
Stage-structured residual classifier.

  stem -> stage 1 -> ... -> stage S -> GAP -> [neck] -> fc

forward_with_capture() returns the logits together with
references to every stage boundary (X_in^s, X_out^s) so
the jigsaw can attach anywhere. Capturing is read-only:
logits are identical with capture on or off.
-------------------------------------------------
"""

from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, Field, model_validator

from .graph_jigsaw.shuffled_graph import StageFeatureMap, StageKind


class BackboneConfig(BaseModel):
    """
    Shape of the residual backbone.

    Default is the desk-scale 4-stage network (16, 32, 64, 128) with
    two blocks per stage. A ResNet-50-like layout is expressible by
    widening the stages and raising the block counts.
    """

    model_config = {"extra": "forbid"}

    in_channels: int = Field(3, ge=1)
    stem_channels: int = Field(16, ge=1)
    stem_stride: Literal[1, 2, 4] = 4
    stage_widths: List[int] = Field(default_factory=lambda: [16, 32, 64, 128])
    blocks_per_stage: List[int] = Field(default_factory=lambda: [2, 2, 2, 2])
    stage_strides: List[int] = Field(default_factory=lambda: [1, 2, 2, 2])
    input_resolution: int = Field(224, ge=8)
    num_classes: int = Field(2, ge=1)
    embedding_dim: Optional[int] = Field(None, ge=1)
    padding_mode: Literal["zeros", "replicate"] = "replicate"

    @model_validator(mode="after")
    def _check_stages(self) -> "BackboneConfig":
        n = len(self.stage_widths)
        if n < 1 or len(self.blocks_per_stage) != n or len(self.stage_strides) != n:
            raise ValueError("stage_widths, blocks_per_stage and stage_strides need one entry per stage")
        if min(self.stage_widths) < 1 or min(self.blocks_per_stage) < 1 or min(self.stage_strides) < 1:
            raise ValueError("stage widths, block counts and strides must be positive")
        return self

    @property
    def num_stages(self) -> int:
        return len(self.stage_widths)

    @property
    def feature_dim(self) -> int:
        return self.embedding_dim or self.stage_widths[-1]

    def stage_input_channels(self) -> List[int]:
        return [self.stem_channels] + list(self.stage_widths[:-1])

    def stage_shapes(self) -> List[Dict[str, Tuple[int, int]]]:
        """Spatial size of every stage's input and output for input_resolution."""
        shapes = []
        size = self.input_resolution
        if self.stem_stride >= 2:
            size = (size - 1) // 2 + 1
        if self.stem_stride == 4:
            size = (size - 1) // 2 + 1
        for stride in self.stage_strides:
            out = (size - 1) // stride + 1
            shapes.append({"input": (size, size), "output": (out, out)})
            size = out
        return shapes


@dataclass
class StageCapture:
    """
    Batched stage boundaries of one forward pass.

    `pairs[s - 1]` is (X_in^s, X_out^s) with shapes (B, C_s, H, W) and
    (B, C'_s, H', W'); X_out^s is the same tensor as X_in^{s+1}.
    """

    pairs: List[Tuple[torch.Tensor, torch.Tensor]]

    @property
    def num_stages(self) -> int:
        return len(self.pairs)

    def stage(self, stage_index: int) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.pairs[stage_index - 1]

    def feature_maps(self, stage_index: int, sample: int = 0) -> Tuple[StageFeatureMap, StageFeatureMap]:
        x_in, x_out = self.stage(stage_index)
        return (
            StageFeatureMap(x_in[sample], stage_index, StageKind.STAGE_INPUT),
            StageFeatureMap(x_out[sample], stage_index, StageKind.STAGE_OUTPUT),
        )


class BasicBlock(nn.Module):
    """Two 3x3 convolutions with a residual shortcut."""

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1, padding_mode: str = "zeros"):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False, padding_mode=padding_mode)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False, padding_mode=padding_mode)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.shortcut = nn.Identity()
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class ResidualBackbone(nn.Module):
    """
    Residual classifier exposing per-stage capture.

    Example:
        >>> model = ResidualBackbone(BackboneConfig(num_classes=20, input_resolution=64, stem_stride=2))
        >>> logits, capture = model.forward_with_capture(images)
        >>> x_in, x_out = capture.stage(3)
    """

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        pad = config.padding_mode

        stem: List[nn.Module] = [
            nn.Conv2d(config.in_channels, config.stem_channels, 3, stride=2 if config.stem_stride > 1 else 1,
                      padding=1, bias=False, padding_mode=pad),
            nn.BatchNorm2d(config.stem_channels),
            nn.ReLU(inplace=True),
        ]
        if config.stem_stride == 4:
            stem.append(nn.MaxPool2d(3, stride=2, padding=1))
        self.stem = nn.Sequential(*stem)

        self.stages = nn.ModuleList()
        width = config.stem_channels
        for out_width, blocks, stride in zip(config.stage_widths, config.blocks_per_stage, config.stage_strides):
            layers = [BasicBlock(width, out_width, stride, pad)]
            layers += [BasicBlock(out_width, out_width, 1, pad) for _ in range(blocks - 1)]
            self.stages.append(nn.Sequential(*layers))
            width = out_width

        self.neck = nn.Linear(width, config.embedding_dim) if config.embedding_dim else nn.Identity()
        self.fc = nn.Linear(config.feature_dim, config.num_classes)

    def _check_input(self, images: torch.Tensor) -> None:
        expected = (self.config.in_channels, self.config.input_resolution, self.config.input_resolution)
        if images.dim() != 4 or tuple(images.shape[1:]) != expected:
            raise ValueError(f"Backbone expects images of shape (B, {expected[0]}, {expected[1]}, {expected[2]}), "
                             f"got {tuple(images.shape)}")

    def features(self, images: torch.Tensor, capture: bool = False) -> Tuple[torch.Tensor, Optional[StageCapture]]:
        """Pooled pre-classifier features and, optionally, the stage capture."""
        self._check_input(images)
        x = self.stem(images)
        pairs = []
        for stage in self.stages:
            out = stage(x)
            if capture:
                pairs.append((x, out))
            x = out
        pooled = self.neck(torch.flatten(F.adaptive_avg_pool2d(x, 1), 1))
        return pooled, (StageCapture(pairs) if capture else None)

    def forward_with_capture(self, images: torch.Tensor, capture: bool = True) -> Tuple[torch.Tensor, Optional[StageCapture]]:
        pooled, captured = self.features(images, capture=capture)
        return self.fc(pooled), captured

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.forward_with_capture(images, capture=False)[0]

    @torch.no_grad()
    def embed(self, images: torch.Tensor) -> torch.Tensor:
        """Unit-normalised pre-classifier embeddings."""
        pooled, _ = self.features(images)
        return F.normalize(pooled, dim=1)


class JigsawClassifier(nn.Module):
    """
    Backbone with the GraphJigsaw attached for training.

    Inference goes through the backbone alone, so a model with the
    jigsaw attached-but-inactive and a jigsaw-free model loaded from the
    same weights produce identical logits.
    """

    def __init__(self, backbone: ResidualBackbone, jigsaw: Optional[nn.Module] = None):
        super().__init__()
        self.backbone = backbone
        self.jigsaw = jigsaw

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.backbone(images)

    def embed(self, images: torch.Tensor) -> torch.Tensor:
        return self.backbone.embed(images)
