"""
Training Engine
===============

One controller owns the model, the optimizer and every random source:

    global torch RNG      parameter initialisation
    data generator        loader shuffling (seed)
    jigsaw generator      per-sample permutations (seed + 1)

Per iteration:
    forward_with_capture -> select active stage(s) -> stage jigsaw(s)
    -> total_loss -> backward -> SGD step -> cosine lr step

Outputs under the run directory:
    metrics.csv                 epoch, iteration, stage_active, loss_cls, loss_jig, lr
    summary.json                per-epoch accuracy / mean losses
    checkpoints/epoch_NNN.pt    every train.checkpoint_every epochs
    checkpoints/last.pt
    abort.json                  diagnostic record if a loss goes non-finite
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import pandas as pd
import torch
import torch.nn.functional as F
import yaml
from torch.optim.lr_scheduler import CosineAnnealingLR
from tqdm import tqdm

from core.backbone import BackboneConfig, JigsawClassifier, ResidualBackbone
from core.errors import ConfigError, DataError, NumericAbort
from core.graph_jigsaw import GraphJigsaw
from services.data_pipeline import DatasetManifest, IdentityImageDataset, make_loader, scan_dataset, split_per_identity

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .schedule import active_stages, stage_term, total_loss

METRIC_COLUMNS = ["epoch", "iteration", "stage_active", "loss_cls", "loss_jig", "lr"]


# ------------------------------------------------------------
# RECORDS
# ------------------------------------------------------------

@dataclass
class StepRecord:
    """What one optimizer step did."""

    epoch: int
    iteration: int
    stage_active: List[int]
    loss_cls: float
    loss_jig: Optional[float]
    lr: float
    correct: int
    batch_size: int

    def to_row(self) -> Dict[str, Any]:
        return {
            "epoch": self.epoch,
            "iteration": self.iteration,
            "stage_active": ";".join(str(s) for s in self.stage_active),
            "loss_cls": self.loss_cls,
            "loss_jig": self.loss_jig,
            "lr": self.lr,
        }


@dataclass
class EpochSummary:
    epoch: int
    iterations: int
    loss_cls: float
    loss_jig: Optional[float]
    train_accuracy: float
    val_accuracy: Optional[float]
    lr: float


@dataclass
class TrainResult:
    run_dir: Path
    checkpoint: Path
    metrics_csv: Path
    epochs: List[EpochSummary] = field(default_factory=list)
    history: List[StepRecord] = field(default_factory=list)

    @property
    def final_train_accuracy(self) -> Optional[float]:
        return self.epochs[-1].train_accuracy if self.epochs else None

    @property
    def val_accuracy(self) -> Optional[float]:
        return self.epochs[-1].val_accuracy if self.epochs else None


# ------------------------------------------------------------
# MODEL / DATA ASSEMBLY
# ------------------------------------------------------------

def build_model(config: RunConfig, num_classes: int) -> Tuple[JigsawClassifier, BackboneConfig]:
    """
    Seed the global RNG, then build the backbone and (unless disabled) the jigsaw.

    The backbone is always initialised first, so a disabled-jigsaw model and
    a jigsaw-equipped model with the same seed start from identical backbone weights.
    """
    torch.manual_seed(config.train.seed)
    backbone_config = config.model.to_backbone(num_classes)
    backbone = ResidualBackbone(backbone_config)
    jigsaw = None
    if config.jigsaw.stage_mode != "disabled":
        jigsaw = GraphJigsaw.from_backbone(
            backbone_config,
            M=config.jigsaw.M,
            t_enc=config.jigsaw.t_enc,
            t_dec=config.jigsaw.t_dec,
            attention_dim=config.jigsaw.attention_dim,
        )
    return JigsawClassifier(backbone, jigsaw), backbone_config


def build_datasets(config: RunConfig) -> Tuple[IdentityImageDataset, Optional[IdentityImageDataset], DatasetManifest]:
    """
    Scan data.root and wrap it into train (and optional validation) datasets.

    Raises:
        ConfigError: data.root not set
        DataError: root missing or empty
    """
    data = config.data
    if not data.root:
        raise ConfigError("data.root is not set (use --data.root or GRAPHJIGSAW_DATA_ROOT)")
    manifest = scan_dataset(Path(data.root), min_images=data.min_images_per_identity, split=data.split)
    if data.identities:
        manifest = manifest.select(data.identities)

    held = None
    if data.val_fraction > 0:
        manifest, held = split_per_identity(manifest, data.val_fraction, seed=config.train.seed)

    train_ds = IdentityImageDataset(manifest, train=True, resize=data.resize, crop=data.crop, seed=config.train.seed)
    val_ds = None
    if held is not None and len(held):
        val_ds = IdentityImageDataset(held, train=False, resize=data.resize, crop=data.crop, seed=config.train.seed)
    print(f"[Data] ✅ {len(manifest)} training images, {manifest.num_classes} identities"
          + (f", {len(held)} held out" if held is not None else ""))
    return train_ds, val_ds, manifest


@torch.no_grad()
def evaluate_accuracy(model: torch.nn.Module, loader, device: torch.device) -> float:
    model.eval()
    correct, total = 0, 0
    for images, labels, _ in loader:
        logits = model(images.to(device))
        correct += int((logits.argmax(dim=1).cpu() == labels).sum())
        total += labels.numel()
    return correct / total if total else 0.0


# ------------------------------------------------------------
# TRAINER
# ------------------------------------------------------------

class Trainer:
    """
    Optimisation controller for one run.

    Args:
        config: Validated run configuration
        num_classes: Identities in the training set
        steps_per_epoch: Batches per epoch (sizes the cosine schedule)
        class_names: Identity name per class index, stored in checkpoints

    Example:
        >>> trainer = Trainer(config, num_classes=20, steps_per_epoch=63)
        >>> record = trainer.train_step(images, labels)
        >>> record.stage_active
        [1]
    """

    def __init__(self, config: RunConfig, num_classes: int, steps_per_epoch: int, class_names: Optional[List[str]] = None):
        if steps_per_epoch < 1:
            raise DataError("Training set yields no batches")
        self.config = config
        self.device = torch.device(config.train.device)
        self.model, self.backbone_config = build_model(config, num_classes)
        self.model.to(self.device)
        self.class_names = list(class_names or [])

        train = config.train
        self.optimizer = torch.optim.SGD(
            self.model.parameters(),
            lr=train.effective_lr,
            momentum=train.momentum,
            weight_decay=train.weight_decay,
        )
        self.steps_per_epoch = steps_per_epoch
        self.scheduler = CosineAnnealingLR(self.optimizer, T_max=train.epochs * steps_per_epoch)
        self.data_generator = torch.Generator().manual_seed(train.seed)
        self.jigsaw_generator = torch.Generator().manual_seed(train.seed + 1)

        self.iteration = 0
        self.epoch = 0

    @property
    def num_stages(self) -> int:
        return self.backbone_config.num_stages

    # ------------------------------------------------------------
    # STEP
    # ------------------------------------------------------------

    def jigsaw_losses(self, capture, stages: List[int]) -> Dict[int, torch.Tensor]:
        """Jigsaw term of every active stage, reduced per jigsaw.reduction."""
        losses = {}
        for s in stages:
            module = self.model.jigsaw.stage(s)
            per_sample, _ = module(*capture.stage(s), generator=self.jigsaw_generator)
            losses[s] = stage_term(per_sample, module.target_size, self.config.jigsaw.reduction)
        return losses

    def train_step(self, images: torch.Tensor, labels: torch.Tensor) -> StepRecord:
        jig_cfg = self.config.jigsaw
        stages = active_stages(jig_cfg.stage_mode, self.iteration, self.num_stages, jig_cfg.stage, jig_cfg.lambda_weight)
        if stages and self.model.jigsaw is None:
            raise ConfigError("Jigsaw stages are active but the model has no jigsaw attached")

        self.model.train()
        images, labels = images.to(self.device), labels.to(self.device)
        logits, capture = self.model.backbone.forward_with_capture(images, capture=bool(stages))
        loss_cls = F.cross_entropy(logits, labels)
        jig = self.jigsaw_losses(capture, stages)

        try:
            loss = total_loss(loss_cls, jig, jig_cfg.lambda_weight)
        except NumericAbort as e:
            e.record.update(
                epoch=self.epoch + 1,
                iteration=self.iteration,
                stage_active=stages,
                loss_cls=float(loss_cls.detach()),
                loss_jig={str(s): float(v.detach()) for s, v in jig.items()},
            )
            raise

        lr = self.optimizer.param_groups[0]["lr"]
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        self.scheduler.step()

        record = StepRecord(
            epoch=self.epoch + 1,
            iteration=self.iteration,
            stage_active=stages,
            loss_cls=float(loss_cls.detach()),
            loss_jig=float(sum(v.detach() for v in jig.values())) if jig else None,
            lr=lr,
            correct=int((logits.detach().argmax(dim=1) == labels).sum()),
            batch_size=labels.numel(),
        )
        self.iteration += 1
        return record

    # ------------------------------------------------------------
    # CHECKPOINTS
    # ------------------------------------------------------------

    def rng_state(self) -> Dict[str, torch.Tensor]:
        return {
            "global": torch.get_rng_state(),
            "data": self.data_generator.get_state(),
            "jigsaw": self.jigsaw_generator.get_state(),
        }

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(
            path,
            model=self.model,
            backbone_config=self.backbone_config,
            optimizer=self.optimizer,
            scheduler=self.scheduler,
            iteration=self.iteration,
            epoch=self.epoch,
            rng=self.rng_state(),
            config=self.config.snapshot(),
            class_names=self.class_names,
        )

    def resume(self, checkpoint: Union[str, Path]) -> None:
        """Restore weights, optimizer, scheduler, counters and random sources."""
        archive = load_checkpoint(checkpoint)
        if archive["backbone_config"] != self.backbone_config.model_dump():
            raise ConfigError(f"Checkpoint {checkpoint} was trained with a different model/dataset configuration")
        try:
            self.model.load_state_dict(archive["model_state"], strict=True)
        except RuntimeError as e:
            raise ConfigError(f"Checkpoint {checkpoint} does not match the configured jigsaw: {e}")
        if archive.get("optimizer") is not None:
            self.optimizer.load_state_dict(archive["optimizer"])
        if archive.get("scheduler") is not None:
            self.scheduler.load_state_dict(archive["scheduler"])
        self.iteration = archive["iteration"]
        self.epoch = archive["epoch"]
        rng = archive.get("rng") or {}
        if "global" in rng:
            torch.set_rng_state(rng["global"])
        if "data" in rng:
            self.data_generator.set_state(rng["data"])
        if "jigsaw" in rng:
            self.jigsaw_generator.set_state(rng["jigsaw"])
        print(f"[Trainer] ✅ Resumed from {checkpoint} (epoch {self.epoch}, iteration {self.iteration})")

    # ------------------------------------------------------------
    # EPOCH LOOP
    # ------------------------------------------------------------

    @staticmethod
    def _write_rows(path: Path, records: List[StepRecord]) -> None:
        frame = pd.DataFrame([r.to_row() for r in records], columns=METRIC_COLUMNS)
        frame.to_csv(path, mode="a", header=not path.exists(), index=False,
                     lineterminator="\n", float_format="%.10g", na_rep="")

    def _prepare_metrics(self, path: Path) -> None:
        """Drop rows a resumed run is about to rewrite."""
        if not path.exists():
            return
        if self.epoch == 0:
            path.unlink()
            return
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        frame = frame[frame["epoch"].astype(int) <= self.epoch]
        frame.to_csv(path, index=False, lineterminator="\n")

    def _abort(self, run_dir: Path, error: NumericAbort) -> None:
        record = {"message": str(error), **error.record}
        with open(run_dir / "abort.json", "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2)
        print(f"[Trainer] ❌ {error} (diagnostic written to {run_dir / 'abort.json'})")

    def fit(
        self,
        train_dataset: IdentityImageDataset,
        run_dir: Union[str, Path],
        val_dataset: Optional[IdentityImageDataset] = None,
    ) -> TrainResult:
        """Train from the current epoch up to train.epochs."""
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        train = self.config.train
        metrics_csv = run_dir / "metrics.csv"
        self._prepare_metrics(metrics_csv)

        loader = make_loader(train_dataset, train.batch_size, shuffle=True,
                             num_workers=train.num_workers, generator=self.data_generator)
        val_loader = None
        if val_dataset is not None:
            val_loader = make_loader(val_dataset, train.batch_size, shuffle=False, num_workers=train.num_workers)

        result = TrainResult(run_dir=run_dir, checkpoint=run_dir / "checkpoints" / "last.pt", metrics_csv=metrics_csv)
        for epoch in range(self.epoch + 1, train.epochs + 1):
            train_dataset.set_epoch(epoch)
            records: List[StepRecord] = []
            bar = tqdm(loader, desc=f"[Trainer] epoch {epoch}/{train.epochs}", leave=False)
            for images, labels, _ in bar:
                try:
                    record = self.train_step(images, labels)
                except NumericAbort as e:
                    self._write_rows(metrics_csv, records)
                    self._abort(run_dir, e)
                    raise
                records.append(record)
                bar.set_postfix(loss_cls=f"{record.loss_cls:.4f}", stage=record.to_row()["stage_active"] or "-")

            self.epoch = epoch
            self._write_rows(metrics_csv, records)

            jig_terms = [r.loss_jig for r in records if r.loss_jig is not None]
            summary = EpochSummary(
                epoch=epoch,
                iterations=len(records),
                loss_cls=sum(r.loss_cls for r in records) / len(records),
                loss_jig=sum(jig_terms) / len(jig_terms) if jig_terms else None,
                train_accuracy=sum(r.correct for r in records) / sum(r.batch_size for r in records),
                val_accuracy=evaluate_accuracy(self.model, val_loader, self.device) if val_loader else None,
                lr=records[-1].lr,
            )
            result.epochs.append(summary)
            result.history.extend(records)
            tqdm.write(
                f"[Trainer] epoch {epoch}/{train.epochs} loss_cls={summary.loss_cls:.4f}"
                + (f" loss_jig={summary.loss_jig:.4f}" if summary.loss_jig is not None else "")
                + f" train_acc={summary.train_accuracy:.3f}"
                + (f" val_acc={summary.val_accuracy:.3f}" if summary.val_accuracy is not None else "")
            )

            if epoch % train.checkpoint_every == 0:
                self.save(run_dir / "checkpoints" / f"epoch_{epoch:03d}.pt")

        self.save(result.checkpoint)
        with open(run_dir / "summary.json", "w", encoding="utf-8") as f:
            json.dump({"epochs": [asdict(e) for e in result.epochs], "iteration": self.iteration}, f, indent=2)
        print(f"[Trainer] ✅ Finished at epoch {self.epoch}; checkpoint {result.checkpoint}")
        return result


def train(
    train_dataset: IdentityImageDataset,
    config: RunConfig,
    run_dir: Union[str, Path],
    resume: Optional[Union[str, Path]] = None,
    val_dataset: Optional[IdentityImageDataset] = None,
) -> TrainResult:
    """
    Train a model on `train_dataset` and write everything under `run_dir`.

    Args:
        train_dataset: Training images (must be non-empty)
        config: Validated run configuration
        run_dir: Output directory (config snapshot, metrics, checkpoints)
        resume: Checkpoint to continue from
        val_dataset: Held-out images scored after every epoch

    Returns:
        TrainResult

    Raises:
        DataError: empty dataset, or validation labels outside the training classes
        ConfigError: checkpoint incompatible with the configuration
        NumericAbort: a loss went non-finite (abort.json is written first)
    """
    if len(train_dataset) == 0:
        raise DataError("Training dataset is empty")
    manifest = train_dataset.manifest
    if val_dataset is not None and val_dataset.manifest.identities != manifest.identities:
        raise DataError("Validation identities differ from the training identities")
    if config.data.crop != train_dataset.crop:
        raise ConfigError(f"Dataset crop {train_dataset.crop} differs from data.crop {config.data.crop}")

    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "config.yaml", "w", encoding="utf-8") as f:
        yaml.safe_dump(config.snapshot(), f, sort_keys=False)

    steps = math.ceil(len(train_dataset) / config.train.batch_size)
    trainer = Trainer(config, manifest.num_classes, steps, class_names=manifest.identities)
    if resume is not None:
        trainer.resume(resume)
    return trainer.fit(train_dataset, run_dir, val_dataset=val_dataset)
