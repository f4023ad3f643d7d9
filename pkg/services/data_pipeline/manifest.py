"""
Dataset Manifest
================

Identity-foldered image datasets:

    root/<identity>/<file>.{png,jpg,jpeg}

scan_dataset() maps identities to dense indices in
alphabetical order, verifies every image opens, and
applies an optional minimum-images-per-identity filter.
The manifest can be cached as CSV (path, identity, split).
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from PIL import Image

from core.errors import DataError

Split = Literal["train", "probe", "distractor"]
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}


@dataclass
class DatasetManifest:
    """
    Ordered list of (relative image path, identity index) pairs.

    Attributes:
        root: Dataset root directory
        samples: (path relative to root, identity index) pairs
        identities: Identity names; index i is identity i
        split: Role of this manifest in a run
        skipped: Number of unreadable files dropped while scanning
    """

    root: Path
    samples: List[Tuple[str, int]]
    identities: List[str]
    split: Split = "train"
    skipped: int = 0
    images_per_identity: Dict[str, int] = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.identities)

    def __len__(self) -> int:
        return len(self.samples)

    def path(self, index: int) -> Path:
        return self.root / self.samples[index][0]

    def identity_name(self, index: int) -> str:
        return self.identities[self.samples[index][1]]

    def select(self, identities: Sequence[str], split: Optional[Split] = None) -> "DatasetManifest":
        """Keep only the named identities, re-indexed densely in the given order."""
        missing = [name for name in identities if name not in self.identities]
        if missing:
            raise DataError(f"Unknown identities: {missing}")
        remap = {self.identities.index(name): i for i, name in enumerate(identities)}
        samples = [(path, remap[label]) for path, label in self.samples if label in remap]
        return DatasetManifest(self.root, samples, list(identities), split or self.split)

    def with_samples(self, samples: List[Tuple[str, int]], split: Split) -> "DatasetManifest":
        return DatasetManifest(self.root, samples, list(self.identities), split)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "path": [path for path, _ in self.samples],
                "identity": [self.identities[label] for _, label in self.samples],
                "split": [self.split] * len(self.samples),
            }
        )

    def to_csv(self, path: Path) -> Path:
        """Write the manifest cache; identical manifests give identical bytes."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")
        return path

    @classmethod
    def from_csv(cls, path: Path, root: Path) -> "DatasetManifest":
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        identities = sorted(frame["identity"].unique())
        index = {name: i for i, name in enumerate(identities)}
        samples = [(p, index[name]) for p, name in zip(frame["path"], frame["identity"])]
        split = frame["split"].iloc[0] if len(frame) else "train"
        return cls(Path(root), samples, identities, split)


def _is_readable(path: Path) -> bool:
    try:
        with Image.open(path) as img:
            img.verify()
        return True
    except Exception:
        return False


def scan_dataset(root: Path, min_images: int = 1, split: Split = "train") -> DatasetManifest:
    """
    Scan an identity-foldered dataset.

    Args:
        root: Directory whose subdirectories are identities
        min_images: Drop identities with fewer readable images
                    (10 mirrors the usual real-data curation; 1 keeps all)
        split: Role recorded in the manifest

    Returns:
        DatasetManifest with dense, alphabetical identity indices

    Raises:
        DataError: root missing, or no identity survives
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"Dataset root not found: {root}")

    skipped = 0
    kept: Dict[str, List[str]] = {}
    for identity_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(p for p in identity_dir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
        readable = []
        for file in files:
            if _is_readable(file):
                readable.append(file.relative_to(root).as_posix())
            else:
                skipped += 1
                print(f"[Data] ⚠️ Skipping unreadable image: {file}")
        if len(readable) >= min_images and readable:
            kept[identity_dir.name] = readable

    if not kept:
        raise DataError(f"No identity with >= {min_images} readable images under {root}")
    if skipped:
        print(f"[Data] ⚠️ {skipped} unreadable file(s) skipped under {root}")

    identities = sorted(kept)
    samples = [(path, label) for label, name in enumerate(identities) for path in kept[name]]
    return DatasetManifest(
        root=root,
        samples=samples,
        identities=identities,
        split=split,
        skipped=skipped,
        images_per_identity={name: len(kept[name]) for name in identities},
    )


def split_per_identity(
    manifest: DatasetManifest,
    holdout_fraction: float,
    seed: int = 0,
) -> Tuple[DatasetManifest, DatasetManifest]:
    """
    Deterministically hold out a fraction of every identity's images.

    Returns:
        (kept manifest with split "train", held-out manifest with split "probe")
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
    rng = np.random.default_rng(seed)
    by_label: Dict[int, List[Tuple[str, int]]] = {}
    for sample in manifest.samples:
        by_label.setdefault(sample[1], []).append(sample)

    kept, held = [], []
    for label in sorted(by_label):
        group = by_label[label]
        n_held = min(len(group) - 1, max(1, round(len(group) * holdout_fraction)))
        chosen = set(rng.permutation(len(group))[:n_held].tolist())
        for i, sample in enumerate(group):
            (held if i in chosen else kept).append(sample)
    return manifest.with_samples(kept, "train"), manifest.with_samples(held, "probe")
