"""
grad_cam.py
-------------------------------------------------
Gradient-weighted class activation maps per backbone stage.

  weights_c = spatial mean of d(logit_target) / d(A_c)
  map       = ReLU(sum_c weights_c * A_c), bilinearly upsampled
  heat      = map rescaled to [0, 1]

A is taken from the stage capture of forward_with_capture,
so no module hooks are registered on the backbone.
-------------------------------------------------
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from core.backbone import ResidualBackbone

# relative span below which a map counts as flat
FLAT_TOLERANCE = 1e-6


@dataclass
class AttentionMap:
    stage_index: int
    heat: np.ndarray
    class_index: int


def default_stages(num_stages: int) -> List[int]:
    """The last three stages (all of them for shallower backbones)."""
    return list(range(max(1, num_stages - 2), num_stages + 1))


def normalize_heat(cam: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; flat or all-zero maps become all zeros."""
    cam = np.asarray(cam, dtype=np.float64)
    lo, hi = float(cam.min()), float(cam.max())
    if hi - lo <= FLAT_TOLERANCE * max(abs(hi), abs(lo), 1e-12):
        return np.zeros_like(cam)
    return np.clip((cam - lo) / (hi - lo), 0.0, 1.0)


def grad_cam(
    backbone: ResidualBackbone,
    image: torch.Tensor,
    stages: Optional[Sequence[int]] = None,
    class_index: Optional[int] = None,
) -> List[AttentionMap]:
    """
    Grad-CAM maps of one normalised image for the requested stages.

    Args:
        backbone: Classifier (put into eval mode)
        image: (3, H, W) normalised tensor
        stages: 1-based stage indices; default is the last three
        class_index: Target class; default is the predicted class

    Returns:
        One AttentionMap per stage, heat of shape (H, W) in [0, 1]
    """
    if image.dim() != 3:
        raise ValueError(f"grad_cam expects a single (3, H, W) image, got {tuple(image.shape)}")
    stages = list(stages) if stages is not None else default_stages(backbone.config.num_stages)
    backbone.eval()
    device = next(backbone.parameters()).device
    x = image.unsqueeze(0).to(device)

    with torch.enable_grad():
        logits, capture = backbone.forward_with_capture(x, capture=True)
        target = int(logits[0].argmax()) if class_index is None else class_index
        activations = [capture.stage(s)[1] for s in stages]
        gradients = torch.autograd.grad(logits[0, target], activations)

    maps = []
    for s, a, g in zip(stages, activations, gradients):
        weights = g.mean(dim=(2, 3), keepdim=True)
        cam = F.relu((weights * a).sum(dim=1, keepdim=True))
        cam = F.interpolate(cam, size=tuple(image.shape[-2:]), mode="bilinear", align_corners=False)
        maps.append(AttentionMap(stage_index=s, heat=normalize_heat(cam[0, 0].detach().cpu().numpy()), class_index=target))
    return maps
