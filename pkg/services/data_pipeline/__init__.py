"""
data_pipeline - manifests, transforms, loaders and the synthetic dataset
"""

from .dataset import IdentityImageDataset, make_loader
from .manifest import DatasetManifest, scan_dataset, split_per_identity
from .synthetic import FaceAttributes, SyntheticDataset, generate_synthetic
from .transforms import augment, denormalize, load_rgb

__all__ = [
    "DatasetManifest",
    "scan_dataset",
    "split_per_identity",
    "IdentityImageDataset",
    "make_loader",
    "augment",
    "denormalize",
    "load_rgb",
    "FaceAttributes",
    "SyntheticDataset",
    "generate_synthetic",
]
