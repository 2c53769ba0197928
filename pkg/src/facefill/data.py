"""Dataset containers and on-disk image folders.

A dataset is an ordered list of equally-sized images with stable string
ids; ordering is the id sort, so every consumer iterates the same way and
seeded runs reproduce exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import ensure_image, load_image, save_image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass
class FaceDataset:
    """Images with ids, plus ground-truth label maps when known."""

    images: list[np.ndarray]
    ids: list[str]
    labels: list[np.ndarray] | None = None

    def __post_init__(self):
        if len(self.images) != len(self.ids):
            raise ValueError("images and ids differ in length")
        if self.labels is not None and len(self.labels) != len(self.images):
            raise ValueError("labels and images differ in length")
        if not self.images:
            raise ValueError("dataset is empty")
        first = None
        for img, image_id in zip(self.images, self.ids):
            ensure_image(img, f"image {image_id!r}")
            if first is None:
                first = img.shape
            elif img.shape != first:
                raise ValueError(f"image {image_id!r} shape {img.shape} differs from {first}")

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.images[i]

    @property
    def image_size(self) -> int:
        return self.images[0].shape[0]


def dataset_from_arrays(images, prefix: str = "img", labels=None) -> FaceDataset:
    ids = [f"{prefix}{i:04d}" for i in range(len(images))]
    return FaceDataset(images=list(images), ids=ids, labels=list(labels) if labels is not None else None)


def load_image_folder(path) -> FaceDataset:
    """All images in a directory, ordered by filename."""
    folder = Path(path)
    if not folder.is_dir():
        raise FileNotFoundError(f"dataset not found: {folder}")
    files = sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"dataset not found: no images in {folder}")
    return FaceDataset(images=[load_image(p) for p in files], ids=[p.stem for p in files])


def save_image_folder(images, path, prefix: str = "img") -> list[Path]:
    folder = Path(path)
    folder.mkdir(parents=True, exist_ok=True)
    written = []
    for i, img in enumerate(images):
        target = folder / f"{prefix}{i:04d}.png"
        save_image(img, target)
        written.append(target)
    return written
