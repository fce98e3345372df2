"""Image datasets and transforms feeding every training and evaluation loop."""

import random
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torch.utils.data import DataLoader, Dataset
from torchvision import transforms

from crisisvit.backbone.vit import ImageTensorBatch
from crisisvit.models.config import Normalization

# Resize-then-crop ratio of the usual 256 -> 224 evaluation pipeline
CROP_RATIO = 224 / 256

NO_TARGET = -100


@dataclass(frozen=True)
class ImageItem:
    """One image on disk and its training target(s)."""

    item_id: str
    path: Path
    target: tuple[int, ...] = (NO_TARGET,)


@dataclass(frozen=True)
class LoadedBatch:
    """A collated batch plus the number of images that failed to decode."""

    batch: ImageTensorBatch | None
    skipped: int


def build_transform(image_size: int, normalization: Normalization, augment: bool = False) -> transforms.Compose:
    """Resize + center crop (deterministic), or random crop + flip when augmenting."""
    normalize = transforms.Normalize(mean=list(normalization.mean), std=list(normalization.std))
    if augment:
        return transforms.Compose(
            [
                transforms.RandomResizedCrop(image_size, scale=(0.5, 1.0)),
                transforms.RandomHorizontalFlip(),
                transforms.ToTensor(),
                normalize,
            ]
        )
    return transforms.Compose(
        [
            transforms.Resize(int(round(image_size / CROP_RATIO))),
            transforms.CenterCrop(image_size),
            transforms.ToTensor(),
            normalize,
        ]
    )


class ImageDataset(Dataset):
    """Decodes images lazily; undecodable files yield ``None`` and are counted at collation."""

    def __init__(self, items: list[ImageItem], transform: transforms.Compose, split: str):
        self.items = list(items)
        self.transform = transform
        self.split = split

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, index: int) -> tuple[torch.Tensor, torch.Tensor, str] | None:
        item = self.items[index]
        try:
            with Image.open(item.path) as img:
                pixels = self.transform(img.convert("RGB"))
        except (OSError, UnidentifiedImageError, ValueError):
            return None
        return pixels, torch.tensor(item.target, dtype=torch.long), item.item_id


def collate_images(samples: list, split: str) -> LoadedBatch:
    good = [s for s in samples if s is not None]
    skipped = len(samples) - len(good)
    if not good:
        return LoadedBatch(None, skipped)
    pixels = torch.stack([s[0] for s in good])
    labels = torch.stack([s[1] for s in good])
    ids = tuple(s[2] for s in good)
    return LoadedBatch(ImageTensorBatch(pixels=pixels, source_ids=ids, split=split, labels=labels), skipped)


def seed_worker(worker_id: int) -> None:
    """Derive numpy/python seeds from the per-worker torch seed."""
    seed = torch.initial_seed() % 2**32
    np.random.seed(seed)
    random.seed(seed)


def make_loader(
    dataset: ImageDataset,
    batch_size: int,
    shuffle: bool,
    seed: int = 0,
    num_workers: int = 0,
) -> DataLoader:
    """Seeded loader; worker seeds derive from ``seed`` so runs are repeatable."""
    generator = torch.Generator()
    generator.manual_seed(seed)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        num_workers=num_workers,
        generator=generator,
        worker_init_fn=seed_worker,
        collate_fn=partial(collate_images, split=dataset.split),
    )
