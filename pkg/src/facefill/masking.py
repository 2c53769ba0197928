"""Mask generation: training squares, the O1-O6 benchmark set, user masks.

A mask is a binary (H, W) bitmap where 1 marks pixels to synthesize. The
bitmap is canonical; the bounding rectangle is derived metadata so that
free-form and multi-component masks work everywhere.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

# test-time soft limit on missing pixels (64*64); larger masks warn, not fail
MASK_AREA_SOFT_LIMIT = 4096

TRAINING_SQUARE = "training-square"
USER_DRAWN = "user-drawn"
SWEEP_SQUARE = "sweep-square"
EVAL_MASK_IDS = ("O1", "O2", "O3", "O4", "O5", "O6")

# (top, left, height, width) at the reference 128x128 frame:
# left half, right half, two eyes, left eye, right eye, lower half
DEFAULT_EVAL_GEOMETRY = {
    "O1": (0, 0, 128, 64),
    "O2": (0, 64, 128, 64),
    "O3": (40, 24, 32, 80),
    "O4": (40, 24, 32, 40),
    "O5": (40, 64, 32, 40),
    "O6": (64, 0, 64, 128),
}


def _tight_bbox(bitmap: np.ndarray):
    rows = np.flatnonzero(bitmap.any(axis=1))
    cols = np.flatnonzero(bitmap.any(axis=0))
    if rows.size == 0:
        return None
    top, bottom = int(rows[0]), int(rows[-1])
    left, right = int(cols[0]), int(cols[-1])
    return (top, left, bottom - top + 1, right - left + 1)


@dataclass
class MaskSpec:
    """Binary missing-pixel map plus its tight bounding rectangle."""

    bitmap: np.ndarray  # (H, W) bool, True = missing
    source: str = USER_DRAWN
    bbox: tuple[int, int, int, int] | None = field(default=None)

    def __post_init__(self):
        bm = np.asarray(self.bitmap)
        if bm.ndim != 2:
            raise ValueError(f"mask bitmap must be (H, W), got shape {bm.shape}")
        self.bitmap = bm.astype(bool)
        self.bbox = _tight_bbox(self.bitmap)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bitmap.shape

    @property
    def area(self) -> int:
        return int(self.bitmap.sum())

    @property
    def is_empty(self) -> bool:
        return self.bbox is None


@dataclass
class MaskedSample:
    """An image, its mask, and the noise-filled network input."""

    original: np.ndarray
    mask: MaskSpec
    network_input: np.ndarray


def rect_mask(image_size: int, top: int, left: int, height: int, width: int, source: str = USER_DRAWN) -> MaskSpec:
    bitmap = np.zeros((image_size, image_size), dtype=bool)
    bitmap[top : top + height, left : left + width] = True
    return MaskSpec(bitmap=bitmap, source=source)


def sample_training_mask(rng: np.random.Generator, image_size: int = 128, mask_size: int = 64) -> MaskSpec:
    """Square mask of fixed size at a uniformly random position.

    The top-left corner is uniform over {0..image_size-mask_size}^2 so the
    square always lies fully inside the image.
    """
    if mask_size > image_size:
        raise ValueError(f"mask_size {mask_size} exceeds image_size {image_size}")
    hi = image_size - mask_size
    top = int(rng.integers(0, hi + 1))
    left = int(rng.integers(0, hi + 1))
    return rect_mask(image_size, top, left, mask_size, mask_size, source=TRAINING_SQUARE)


def sample_sweep_mask(rng: np.random.Generator, image_size: int, mask_size: int) -> MaskSpec:
    mask = sample_training_mask(rng, image_size=image_size, mask_size=mask_size)
    mask.source = SWEEP_SQUARE
    return mask


def fill_noise(img: np.ndarray, mask: MaskSpec, rng: np.random.Generator) -> np.ndarray:
    """Replace masked pixels with i.i.d. uniform [0,1) noise per channel.

    Pixels outside the mask are returned bit-identical to the input.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.shape[:2] != mask.shape:
        raise ValueError(f"image {arr.shape[:2]} and mask {mask.shape} sizes differ")
    out = arr.copy()
    n = mask.area
    if n:
        out[mask.bitmap] = rng.random((n, arr.shape[2]))
    return out


def make_masked_sample(img: np.ndarray, mask: MaskSpec, rng: np.random.Generator) -> MaskedSample:
    return MaskedSample(original=img, mask=mask, network_input=fill_noise(img, mask, rng))


def _scale_rect(rect, image_size: int):
    s = image_size / 128.0
    top, left, height, width = rect
    r0, c0 = round(top * s), round(left * s)
    r1, c1 = round((top + height) * s), round((left + width) * s)
    return (r0, c0, r1 - r0, c1 - c0)


def standard_eval_masks(image_size: int = 128, geometry: dict | None = None) -> list[MaskSpec]:
    """Fixed benchmark masks O1..O6 (halves, eyes, lower face).

    The rectangles are a recorded convention (see DEFAULT_EVAL_GEOMETRY) at
    the 128x128 frame, scaled proportionally for other sizes, and can be
    overridden via `geometry` or a config file (load_eval_geometry).
    """
    geo = dict(DEFAULT_EVAL_GEOMETRY)
    if geometry:
        geo.update(geometry)
    masks = []
    for mask_id in EVAL_MASK_IDS:
        rect = geo[mask_id] if image_size == 128 else _scale_rect(geo[mask_id], image_size)
        masks.append(rect_mask(image_size, *rect, source=mask_id))
    return masks


def load_eval_geometry(path) -> dict:
    """Read an O1..O6 geometry override: {mask_id: [top, left, height, width]}."""
    text = open(path).read()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        raw = yaml.safe_load(text)
    else:
        raw = json.loads(text)
    geo = {}
    for key, rect in raw.items():
        if key not in EVAL_MASK_IDS:
            raise ValueError(f"unknown mask id {key!r} in geometry file")
        geo[key] = tuple(int(v) for v in rect)
    return geo


def sweep_mask_sizes() -> list[int]:
    """Square mask side lengths for the generalization sweep: 16..80 step 8."""
    return list(range(16, 81, 8))


def load_user_mask(path) -> MaskSpec:
    """Read a user-drawn mask from a single-channel 8-bit PNG.

    Pixels >= 128 are treated as missing. Arbitrary shapes and multiple
    components are allowed; an empty mask warns (nothing to complete).
    """
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"{path}: expected single-channel 8-bit mask, got mode {im.mode!r}")
        data = np.asarray(im, dtype=np.uint8)
    mask = MaskSpec(bitmap=data >= 128, source=USER_DRAWN)
    if mask.is_empty:
        warnings.warn(f"{path}: mask is empty, nothing to complete", stacklevel=2)
    return mask


def save_mask(mask: MaskSpec, path) -> None:
    """Write the wire format: single-channel 8-bit PNG, 255 = missing."""
    data = np.where(mask.bitmap, 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def decode_mask_png(data: bytes, expect_shape: tuple[int, int] | None = None) -> MaskSpec:
    import io

    with Image.open(io.BytesIO(data)) as im:
        if im.mode != "L":
            raise ValueError(f"expected single-channel 8-bit mask PNG, got mode {im.mode!r}")
        arr = np.asarray(im, dtype=np.uint8)
    if expect_shape is not None and arr.shape != expect_shape:
        raise ValueError(f"mask size {arr.shape} does not match image size {expect_shape}")
    return MaskSpec(bitmap=arr >= 128, source=USER_DRAWN)


def warn_if_oversized(mask: MaskSpec) -> str | None:
    """Soft test-time check: more than 64x64 missing pixels is discouraged."""
    if mask.area > MASK_AREA_SOFT_LIMIT:
        msg = f"mask area {mask.area} exceeds the suggested limit of {MASK_AREA_SOFT_LIMIT} pixels"
        warnings.warn(msg, stacklevel=2)
        return msg
    return None
