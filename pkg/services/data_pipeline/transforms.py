"""
Image transforms
================

Train path:  resize (bilinear) -> uniform random crop -> flip(p=0.5)
             -> [0, 1] -> normalise (mean 0.5, std 0.5)
Eval path:   resize -> center crop -> [0, 1] -> normalise

Randomness comes from an explicit torch.Generator so that a
fixed seed replays the same crop/flip sequence.
"""

from pathlib import Path
from typing import Optional, Union

import torch
import torchvision.transforms.functional as TF
from PIL import Image

from core.errors import DataError

NORMALIZE_MEAN = (0.5, 0.5, 0.5)
NORMALIZE_STD = (0.5, 0.5, 0.5)


def load_rgb(path: Union[str, Path]) -> Image.Image:
    """Open an image as RGB; undecodable files raise DataError."""
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except Exception as e:
        raise DataError(f"Cannot decode image {path}: {e}")


def augment(
    image: Image.Image,
    train: bool = True,
    generator: Optional[torch.Generator] = None,
    resize: int = 256,
    crop: int = 224,
) -> torch.Tensor:
    """
    Turn an RGB image into a normalised (3, crop, crop) tensor.

    Args:
        image: Decoded RGB image
        train: Random crop + flip when True, center crop otherwise
        generator: Random source for crop offsets and flips
        resize: Side length after the bilinear resize
        crop: Output side length

    Returns:
        torch.Tensor of shape (3, crop, crop)
    """
    if crop > resize:
        raise ValueError(f"crop ({crop}) cannot exceed resize ({resize})")
    image = TF.resize(image.convert("RGB"), [resize, resize], interpolation=TF.InterpolationMode.BILINEAR)

    if train:
        top, left = torch.randint(0, resize - crop + 1, (2,), generator=generator).tolist()
        image = TF.crop(image, top, left, crop, crop)
        if torch.rand(1, generator=generator).item() < 0.5:
            image = TF.hflip(image)
    else:
        image = TF.center_crop(image, [crop, crop])

    return TF.normalize(TF.to_tensor(image), NORMALIZE_MEAN, NORMALIZE_STD)


def denormalize(tensor: torch.Tensor) -> torch.Tensor:
    """Map a normalised (3, H, W) tensor back to [0, 1]."""
    mean = torch.tensor(NORMALIZE_MEAN, dtype=tensor.dtype).view(3, 1, 1)
    std = torch.tensor(NORMALIZE_STD, dtype=tensor.dtype).view(3, 1, 1)
    return (tensor.cpu() * std + mean).clamp(0.0, 1.0)

