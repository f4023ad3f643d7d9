"""
Checkpoint archive.

One torch.save'd dict per checkpoint:

    format_version   int
    backbone_config  BackboneConfig fields
    model_state      state dict, keys "backbone.*" and "jigsaw.*"
    optimizer        optimizer state dict
    scheduler        lr scheduler state dict
    iteration        optimizer steps taken
    epoch            completed epochs
    rng              {"global", "data", "jigsaw"} generator states
    config           run configuration snapshot
    class_names      identity name per class index

Archives hold only tensors and plain containers, so they load
with weights_only=True.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import torch

from core.backbone import BackboneConfig, ResidualBackbone
from core.errors import ConfigError, DataError

FORMAT_VERSION = 1
REQUIRED_KEYS = ("format_version", "backbone_config", "model_state", "iteration", "epoch", "config")


def save_checkpoint(
    path: Union[str, Path],
    *,
    model: torch.nn.Module,
    backbone_config: BackboneConfig,
    optimizer: Optional[torch.optim.Optimizer],
    scheduler: Optional[Any],
    iteration: int,
    epoch: int,
    rng: Dict[str, torch.Tensor],
    config: Dict[str, Any],
    class_names: Optional[List[str]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    archive = {
        "format_version": FORMAT_VERSION,
        "backbone_config": backbone_config.model_dump(),
        "model_state": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "scheduler": scheduler.state_dict() if scheduler is not None else None,
        "iteration": iteration,
        "epoch": epoch,
        "rng": rng,
        "config": config,
        "class_names": list(class_names or []),
    }
    # write-then-rename: `path` is either the old archive or the complete new one
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(archive, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path: Union[str, Path], map_location: str = "cpu") -> Dict[str, Any]:
    """
    Read a checkpoint archive.

    Raises:
        DataError: file missing or not a checkpoint
        ConfigError: archive written by an incompatible format version
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Checkpoint not found: {path}")
    try:
        archive = torch.load(path, map_location=map_location, weights_only=True)
    except Exception as e:
        raise DataError(f"Cannot read checkpoint {path}: {e}")

    if not isinstance(archive, dict) or any(key not in archive for key in REQUIRED_KEYS):
        raise DataError(f"{path} is not a GraphJigsaw checkpoint")
    if archive["format_version"] != FORMAT_VERSION:
        raise ConfigError(
            f"Checkpoint {path} has format_version {archive['format_version']}, expected {FORMAT_VERSION}"
        )
    return archive


def load_backbone(checkpoint: Union[str, Path, Dict[str, Any]], map_location: str = "cpu") -> ResidualBackbone:
    """
    Rebuild the jigsaw-free classifier stored in a checkpoint, in eval mode.

    Jigsaw weights in the archive are ignored.
    """
    archive = checkpoint if isinstance(checkpoint, dict) else load_checkpoint(checkpoint, map_location)
    backbone = ResidualBackbone(BackboneConfig(**archive["backbone_config"]))
    prefix = "backbone."
    state = {k[len(prefix):]: v for k, v in archive["model_state"].items() if k.startswith(prefix)}
    backbone.load_state_dict(state, strict=True)
    return backbone.to(map_location).eval()
