"""
Dataset Ingestion

Loads CIFAR-10, CIFAR-100 and STL-10 from their published on-disk archives
(never downloading), plus a built-in synthetic fixture for hermetic runs.
Images are float tensors in [0, 1], shape (N, 3, H, W).
"""

import hashlib
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset
from torchvision import datasets as tv_datasets

from gacd.utils.exceptions import DatasetError, UnknownDatasetError
from gacd.utils.logger import logger


class IndexedTensorDataset(Dataset):
    """In-memory images and labels that also yield each sample's instance index."""

    def __init__(self, images: torch.Tensor, labels: torch.Tensor):
        if images.shape[0] != labels.shape[0]:
            raise ValueError("images and labels must have the same length")
        self.images = images
        self.labels = labels.long()

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, torch.Tensor, int]:
        return self.images[index], self.labels[index], index

    @property
    def image_size(self) -> int:
        return self.images.shape[-1]


@dataclass
class DatasetSplits:
    """Train/test splits of one dataset."""

    name: str
    train: IndexedTensorDataset
    test: IndexedTensorDataset
    num_classes: int
    class_names: List[str] = field(default_factory=list)
    checksums: Dict[str, str] = field(default_factory=dict)


def _to_float_images(array: np.ndarray, channels_last: bool) -> torch.Tensor:
    images = torch.from_numpy(np.ascontiguousarray(array))
    if channels_last:
        images = images.permute(0, 3, 1, 2)
    return images.float().div_(255.0).contiguous()


def _load_cifar(cls, root: str) -> Tuple[Dict[str, tuple], List[str]]:
    splits = {}
    for split, is_train in (("train", True), ("test", False)):
        ds = cls(root=root, train=is_train, download=False)
        splits[split] = (_to_float_images(ds.data, channels_last=True), torch.tensor(ds.targets))
    return splits, list(ds.classes)


def load_cifar10(root: str):
    return _load_cifar(tv_datasets.CIFAR10, root)


def load_cifar100(root: str):
    return _load_cifar(tv_datasets.CIFAR100, root)


def load_stl10(root: str):
    splits = {}
    for split in ("train", "test"):
        ds = tv_datasets.STL10(root=root, split=split, download=False)
        splits[split] = (_to_float_images(ds.data, channels_last=False), torch.from_numpy(ds.labels.astype(np.int64)))
    return splits, list(ds.classes)


def make_synthetic(
    per_class: int = 256,
    num_classes: int = 2,
    image_size: int = 32,
    seed: int = 0,
    noise: float = 0.35,
    shift: float = 0.0,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Noise-with-signal images: class c brightens a class-specific band of rows.

    ``shift`` adds a global colour offset, giving a related but distinct
    distribution for transfer experiments.
    """
    generator = torch.Generator().manual_seed(seed)
    labels = torch.arange(num_classes).repeat_interleave(per_class)
    images = 0.5 + noise * (torch.rand(labels.numel(), 3, image_size, image_size, generator=generator) - 0.5)

    band = image_size // num_classes
    for cls in range(num_classes):
        rows = slice(cls * band, (cls + 1) * band)
        images[labels == cls, :, rows, :] += 0.25
    images[:, 0] += shift

    order = torch.randperm(labels.numel(), generator=generator)
    return images[order].clamp(0.0, 1.0), labels[order]


def load_synthetic(root: str, shift: float = 0.0):
    del root
    splits = {
        "train": make_synthetic(per_class=256, seed=0, shift=shift),
        "test": make_synthetic(per_class=64, seed=1, shift=shift),
    }
    return splits, ["band0", "band1"]


LOADERS: Dict[str, Callable[[str], tuple]] = {
    "cifar10": load_cifar10,
    "cifar100": load_cifar100,
    "stl10": load_stl10,
    "synthetic": load_synthetic,
    "synthetic-shifted": lambda root: load_synthetic(root, shift=0.15),
}


def checksum(images: torch.Tensor, labels: torch.Tensor) -> str:
    digest = hashlib.sha256()
    digest.update(images.numpy().tobytes())
    digest.update(labels.numpy().tobytes())
    return digest.hexdigest()[:16]


def _select(
    images: torch.Tensor,
    labels: torch.Tensor,
    classes: Optional[Sequence[int]],
    limit: Optional[int],
) -> Tuple[torch.Tensor, torch.Tensor]:
    if classes is not None:
        keep = torch.isin(labels, torch.tensor(list(classes)))
        images, labels = images[keep], labels[keep]
        remap = {c: i for i, c in enumerate(classes)}
        labels = torch.tensor([remap[int(c)] for c in labels], dtype=torch.long)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    return images, labels


def ingest_dataset(
    name: str,
    root: str,
    train_size: Optional[int] = None,
    test_size: Optional[int] = None,
    classes: Optional[Sequence[int]] = None,
) -> DatasetSplits:
    """
    Load a dataset's train/test splits into memory.

    Args:
        name: One of ``LOADERS``.
        root: Directory holding the extracted archive; ``GACD_DATA_ROOT`` overrides it.
        train_size: Keep only the first N training images (after class filtering).
        test_size: Keep only the first N test images.
        classes: Optional class subset; labels are remapped to 0..len(classes)-1.

    Raises:
        UnknownDatasetError: If the name is not supported.
        DatasetError: If the archive is missing or corrupt.
    """
    if name not in LOADERS:
        raise UnknownDatasetError(name, LOADERS)
    root = os.getenv("GACD_DATA_ROOT", root)

    try:
        raw, class_names = LOADERS[name](root)
    except (RuntimeError, OSError, ValueError) as e:
        raise DatasetError(name, root, str(e)) from e

    num_classes = len(class_names)
    if classes is not None:
        unknown = [c for c in classes if not 0 <= c < num_classes]
        if unknown:
            raise DatasetError(name, root, f"class ids {unknown} not in [0, {num_classes})")
        class_names = [class_names[c] for c in classes]
        num_classes = len(classes)

    parts = {}
    checksums = {}
    for split, limit in (("train", train_size), ("test", test_size)):
        images, labels = _select(*raw[split], classes, limit)
        checksums[split] = checksum(images, labels)
        parts[split] = IndexedTensorDataset(images, labels)
        logger.info(f"{name}/{split}: {len(labels)} images, sha256 {checksums[split]}")

    return DatasetSplits(
        name=name,
        train=parts["train"],
        test=parts["test"],
        num_classes=num_classes,
        class_names=class_names,
        checksums=checksums,
    )


def resize_images(dataset: IndexedTensorDataset, size: int) -> IndexedTensorDataset:
    """Bilinear resize to ``size`` x ``size`` (no-op when already that size)."""
    if dataset.image_size == size:
        return dataset
    images = F.interpolate(dataset.images, size=(size, size), mode="bilinear", align_corners=False)
    return IndexedTensorDataset(images.clamp(0.0, 1.0), dataset.labels)


def make_loader(
    dataset: Dataset,
    batch_size: int,
    shuffle: bool = False,
    seed: int = 0,
    num_workers: int = 0,
) -> DataLoader:
    """DataLoader whose shuffling order depends only on ``seed``."""
    generator = torch.Generator().manual_seed(seed)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        generator=generator,
        num_workers=num_workers,
    )


__all__ = [
    "IndexedTensorDataset",
    "DatasetSplits",
    "LOADERS",
    "make_synthetic",
    "ingest_dataset",
    "resize_images",
    "make_loader",
]
