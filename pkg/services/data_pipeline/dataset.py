"""
Torch dataset over a DatasetManifest.

Per-sample augmentation randomness is a pure function of
(seed, epoch, index), so the crop/flip sequence does not
depend on how samples are spread over loader workers.
"""

from typing import Optional, Tuple

import torch
from torch.utils.data import DataLoader, Dataset

from .manifest import DatasetManifest
from .transforms import augment, load_rgb


class IdentityImageDataset(Dataset):
    """
    Images and identity labels of one manifest.

    Args:
        manifest: Samples to serve
        train: Use the random train transform
        resize, crop: Transform sizes
        seed: Base seed of the per-sample random sources
    """

    def __init__(self, manifest: DatasetManifest, train: bool = True, resize: int = 256, crop: int = 224, seed: int = 0):
        self.manifest = manifest
        self.train = train
        self.resize = resize
        self.crop = crop
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.manifest)

    def _generator(self, index: int) -> torch.Generator:
        generator = torch.Generator()
        generator.manual_seed((self.seed * 1_000_003 + self.epoch * 10_007 + index) % (2**63 - 1))
        return generator

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, int, int]:
        image = load_rgb(self.manifest.path(index))
        tensor = augment(
            image,
            train=self.train,
            generator=self._generator(index) if self.train else None,
            resize=self.resize,
            crop=self.crop,
        )
        return tensor, self.manifest.samples[index][1], index


def make_loader(
    dataset: IdentityImageDataset,
    batch_size: int,
    shuffle: bool,
    num_workers: int = 0,
    generator: Optional[torch.Generator] = None,
    drop_last: bool = False,
) -> DataLoader:
    """DataLoader whose prefetch workers share only the ready-batch queue."""
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        num_workers=num_workers,
        generator=generator,
        drop_last=drop_last,
        persistent_workers=False,
    )
