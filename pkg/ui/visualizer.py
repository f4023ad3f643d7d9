"""
visualizer.py
-------------------------------------------------
File-only rendering of model attention and retrieval.

Features:
  ✅ Grad-CAM heat overlays, one PNG per stage per image
  ✅ Retrieval grids: query + top-K hits, incorrect hits
     framed with a red dotted border
  ✅ Optional baseline rows under the GraphJigsaw rows
-------------------------------------------------
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib
import numpy as np
import torch
from PIL import Image, ImageDraw

from core.backbone import ResidualBackbone
from services.data_pipeline.transforms import augment, denormalize, load_rgb
from services.identification.retrieval import RetrievalHit

from .grad_cam import AttentionMap, grad_cam

HEAT_COLORMAP = "jet"
INCORRECT_COLOR = (220, 30, 30)
CORRECT_COLOR = (40, 170, 80)


def tensor_to_image(tensor: torch.Tensor) -> Image.Image:
    """Normalised (3, H, W) tensor -> RGB PIL image."""
    array = (denormalize(tensor).permute(1, 2, 0).numpy() * 255.0).round().astype(np.uint8)
    return Image.fromarray(array)


def overlay_heatmap(image: Image.Image, heat: np.ndarray, alpha: float = 0.45) -> Image.Image:
    """Blend a [0, 1] heat map, coloured with the jet colormap, over an image."""
    if heat.shape != (image.height, image.width):
        raise ValueError(f"Heat map {heat.shape} does not match image {(image.height, image.width)}")
    colored = matplotlib.colormaps[HEAT_COLORMAP](np.clip(heat, 0.0, 1.0))[..., :3]
    heat_image = Image.fromarray((colored * 255.0).round().astype(np.uint8))
    return Image.blend(image.convert("RGB"), heat_image, alpha)


def overlay_name(image_path: Union[str, Path], stage_index: int, prefix: str = "") -> str:
    return f"{prefix}{Path(image_path).stem}_stage{stage_index}.png"


def save_attention_overlays(
    backbone: ResidualBackbone,
    image_path: Union[str, Path],
    out_dir: Union[str, Path],
    resize: int,
    crop: int,
    prefix: str = "",
    stages: Optional[Sequence[int]] = None,
) -> List[Path]:
    """
    Write one Grad-CAM overlay per stage for an image.

    Files are named <prefix><image stem>_stage<s>.png.

    Raises:
        DataError: the image cannot be decoded
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tensor = augment(load_rgb(image_path), train=False, resize=resize, crop=crop)
    base = tensor_to_image(tensor)

    written = []
    maps: List[AttentionMap] = grad_cam(backbone, tensor, stages=stages)
    for m in maps:
        path = out_dir / overlay_name(image_path, m.stage_index, prefix)
        overlay_heatmap(base, m.heat).save(path)
        written.append(path)
    return written


# ------------------------------------------------------------
# RETRIEVAL GRIDS
# ------------------------------------------------------------

def _dotted_border(draw: ImageDraw.ImageDraw, box, color, width: int = 3, dash: int = 4) -> None:
    x0, y0, x1, y1 = box
    for x in range(x0, x1, dash * 2):
        end = min(x + dash, x1)
        draw.line([(x, y0), (end, y0)], fill=color, width=width)
        draw.line([(x, y1), (end, y1)], fill=color, width=width)
    for y in range(y0, y1, dash * 2):
        end = min(y + dash, y1)
        draw.line([(x0, y), (x0, end)], fill=color, width=width)
        draw.line([(x1, y), (x1, end)], fill=color, width=width)


def _tile(path: Path, size: int) -> Image.Image:
    return load_rgb(path).resize((size, size), Image.Resampling.BILINEAR)


def render_retrieval_grid(
    query_path: Union[str, Path],
    rows: Dict[str, List[RetrievalHit]],
    gallery_root: Union[str, Path],
    out_path: Union[str, Path],
    tile: int = 96,
    pad: int = 8,
) -> Path:
    """
    Render one row per model: the query, then its ranked hits.

    Args:
        query_path: Query image
        rows: Row label (e.g. "graphjigsaw", "baseline") -> hits
        gallery_root: Root the hit sources are relative to
        out_path: PNG to write
        tile: Side of each thumbnail

    Incorrect hits get a red dotted frame, correct ones a thin green frame.
    """
    gallery_root = Path(gallery_root)
    columns = 1 + max((len(hits) for hits in rows.values()), default=0)
    label_h = 14
    width = pad + columns * (tile + pad)
    height = pad + len(rows) * (tile + label_h + pad)
    canvas = Image.new("RGB", (width, height), (255, 255, 255))
    draw = ImageDraw.Draw(canvas)
    query = _tile(Path(query_path), tile)

    for r, (label, hits) in enumerate(rows.items()):
        y = pad + r * (tile + label_h + pad)
        draw.text((pad, y), label, fill=(0, 0, 0))
        y += label_h
        canvas.paste(query, (pad, y))
        draw.rectangle([pad, y, pad + tile - 1, y + tile - 1], outline=(0, 0, 0), width=2)
        for c, hit in enumerate(hits, start=1):
            x = pad + c * (tile + pad)
            canvas.paste(_tile(gallery_root / hit.source, tile), (x, y))
            box = (x, y, x + tile - 1, y + tile - 1)
            if hit.correct is False:
                _dotted_border(draw, box, INCORRECT_COLOR)
            elif hit.correct:
                draw.rectangle(box, outline=CORRECT_COLOR, width=2)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(out_path)
    return out_path
