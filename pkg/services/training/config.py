"""
Run Configuration
=================

YAML document with four sections, validated by pydantic:

    model:   backbone shape (stage widths, strides, resolution)
    jigsaw:  M, t_enc, t_dec, lambda, stage_mode, stage
    train:   epochs, batch_size, lr, momentum, weight_decay, seed
    data:    root, split, min_images_per_identity, resize, crop

Unknown keys anywhere are configuration errors. Dotted
command-line overrides (``jigsaw.M=3``) are typed with YAML
scalar rules and applied before validation.

Environment:
    GRAPHJIGSAW_DATA_ROOT  default for data.root (read from .env too)
"""

import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, model_validator

from core.backbone import BackboneConfig
from core.errors import ConfigError

load_dotenv()

StageMode = Literal["stage_wise_progressive", "single_stage", "simultaneous", "disabled"]


class ModelSection(BaseModel):
    model_config = {"extra": "forbid"}

    stem_channels: int = Field(16, ge=1)
    stem_stride: Literal[1, 2, 4] = 4
    stage_widths: List[int] = Field(default_factory=lambda: [16, 32, 64, 128])
    blocks_per_stage: List[int] = Field(default_factory=lambda: [2, 2, 2, 2])
    stage_strides: List[int] = Field(default_factory=lambda: [1, 2, 2, 2])
    input_resolution: int = Field(224, ge=8)
    embedding_dim: Optional[int] = Field(None, ge=1)
    padding_mode: Literal["zeros", "replicate"] = "replicate"

    def to_backbone(self, num_classes: int) -> BackboneConfig:
        return BackboneConfig(num_classes=num_classes, **self.model_dump())


class JigsawSection(BaseModel):
    model_config = {"extra": "forbid", "populate_by_name": True}

    M: int = Field(3, ge=2)
    t_enc: int = Field(1, ge=1)
    t_dec: int = Field(1, ge=1)
    lambda_weight: float = Field(0.1, ge=0.0, alias="lambda")
    stage_mode: StageMode = "stage_wise_progressive"
    stage: Optional[int] = Field(None, ge=1)
    attention_dim: Optional[int] = Field(None, ge=1)
    reduction: Literal["sum", "mean"] = "sum"

    @property
    def enabled(self) -> bool:
        """False when no jigsaw term can ever enter the loss."""
        return self.stage_mode != "disabled" and self.lambda_weight > 0.0


class TrainSection(BaseModel):
    model_config = {"extra": "forbid"}

    epochs: int = Field(60, ge=1)
    batch_size: int = Field(32, ge=1)
    lr: Optional[float] = Field(None, gt=0.0)
    momentum: float = Field(0.9, ge=0.0)
    weight_decay: float = Field(1e-4, ge=0.0)
    seed: int = 0
    checkpoint_every: int = Field(1, ge=1)
    num_workers: int = Field(0, ge=0)
    device: str = "cpu"

    @property
    def effective_lr(self) -> float:
        """Explicit lr, or 0.05 scaled by batch_size / 96."""
        return self.lr if self.lr is not None else 0.05 * self.batch_size / 96


class DataSection(BaseModel):
    model_config = {"extra": "forbid"}

    root: Optional[str] = Field(default_factory=lambda: os.getenv("GRAPHJIGSAW_DATA_ROOT"))
    split: Literal["train", "probe", "distractor"] = "train"
    min_images_per_identity: int = Field(10, ge=1)
    identities: Optional[List[str]] = None
    resize: int = Field(256, ge=8)
    crop: int = Field(224, ge=8)
    val_fraction: float = Field(0.0, ge=0.0, lt=1.0)


class RunConfig(BaseModel):
    """Validated run configuration; see the module docstring for the layout."""

    model_config = {"extra": "forbid"}

    model: ModelSection = Field(default_factory=ModelSection)
    jigsaw: JigsawSection = Field(default_factory=JigsawSection)
    train: TrainSection = Field(default_factory=TrainSection)
    data: DataSection = Field(default_factory=DataSection)

    @model_validator(mode="after")
    def _cross_check(self) -> "RunConfig":
        backbone = self.model.to_backbone(num_classes=1)
        if self.jigsaw.stage_mode == "single_stage":
            if self.jigsaw.stage is None or not 1 <= self.jigsaw.stage <= backbone.num_stages:
                raise ValueError(f"single_stage mode needs jigsaw.stage in [1, {backbone.num_stages}]")
        if self.data.crop > self.data.resize:
            raise ValueError(f"data.crop ({self.data.crop}) cannot exceed data.resize ({self.data.resize})")
        if self.data.crop != self.model.input_resolution:
            raise ValueError(
                f"data.crop ({self.data.crop}) must equal model.input_resolution ({self.model.input_resolution})"
            )
        for s, shapes in enumerate(backbone.stage_shapes(), start=1):
            for side, (h, w) in shapes.items():
                if self.jigsaw.M > min(h, w):
                    raise ValueError(f"jigsaw.M={self.jigsaw.M} does not fit stage {s} {side} of size {h}x{w}")
        return self

    def snapshot(self) -> Dict[str, Any]:
        """Plain dict with the on-disk key names (``jigsaw.lambda``)."""
        return self.model_dump(mode="json", by_alias=True)


# ------------------------------------------------------------
# LOADING
# ------------------------------------------------------------

Overrides = Union[Mapping[str, Any], Sequence[Tuple[str, Any]]]


def parse_scalar(text: Any) -> Any:
    """Type a command-line value the way YAML would ("3" -> 3, "0.1" -> 0.1, "null" -> None)."""
    if not isinstance(text, str):
        return text
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def apply_overrides(document: Dict[str, Any], overrides: Overrides) -> Dict[str, Any]:
    """
    Set dotted keys in a nested dict.

    Example:
        >>> apply_overrides({}, {"jigsaw.M": "4"})
        {'jigsaw': {'M': 4}}
    """
    items = overrides.items() if isinstance(overrides, Mapping) else overrides
    for dotted, value in items:
        parts = dotted.split(".")
        if not all(parts):
            raise ConfigError(f"Malformed override key: {dotted!r}")
        node = document
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Override {dotted!r} descends into non-section key {part!r}")
            node = child
        node[parts[-1]] = parse_scalar(value)
    return document


def _format_validation_error(error: ValidationError) -> str:
    issues = []
    for item in error.errors():
        where = ".".join(str(p) for p in item["loc"]) or "<root>"
        issues.append(f"{where}: {item['msg']}")
    return "; ".join(issues)


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Overrides] = None) -> RunConfig:
    """
    Read, override and validate a run configuration.

    Args:
        path: YAML document; None starts from the defaults
        overrides: Dotted keys applied on top of the document

    Returns:
        RunConfig

    Raises:
        ConfigError: unreadable file, unknown key or invalid value
    """
    document: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as e:
            raise ConfigError(f"Config file {path} is not valid YAML: {e}")
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"Config file {path} must hold a mapping at the top level")
        document = loaded or {}

    apply_overrides(document, overrides or {})
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {_format_validation_error(e)}")
