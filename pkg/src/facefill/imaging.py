"""Image tensors, PNG/JPEG I/O and training-time augmentation.

Images are numpy arrays of shape (H, W, 3) with float values in [0, 1].
That array is the single pixel currency of the whole package; networks
convert to torch tensors internally and convert back at their boundary.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image


class ImageFormatError(ValueError):
    """File decoded, but not as 8-bit RGB."""


def ensure_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate the (H, W, 3) float-in-[0,1] contract and return the array."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name}: expected (H, W, 3) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name}: values outside [0, 1]")
    return arr


def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB PNG/JPEG as a float image in [0, 1].

    Raises OSError for unreadable files and ImageFormatError for images
    that are not plain 8-bit RGB (palette, grayscale, alpha, 16-bit).
    """
    with Image.open(path) as im:
        if im.mode != "RGB":
            raise ImageFormatError(f"{path}: expected RGB image, got mode {im.mode!r}")
        data = np.asarray(im, dtype=np.uint8)
    return data.astype(np.float64) / 255.0


def encode_png(img: np.ndarray) -> bytes:
    """Quantize to 8-bit (round half up) and encode as RGB PNG bytes.

    Both the CLI and the HTTP service emit results through this function,
    so identical pixel data yields byte-identical PNGs on either path.
    """
    arr = ensure_image(img)
    # round-half-up: floor(v*255 + 0.5); np.round would round half to even
    quant = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(quant, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    """Decode RGB PNG/JPEG bytes to a float image in [0, 1]."""
    with Image.open(io.BytesIO(data)) as im:
        if im.mode != "RGB":
            raise ImageFormatError(f"expected RGB image, got mode {im.mode!r}")
        arr = np.asarray(im, dtype=np.uint8)
    return arr.astype(np.float64) / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Write a float image in [0, 1] as an 8-bit RGB PNG."""
    data = encode_png(img)
    with open(path, "wb") as fh:
        fh.write(data)


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma, (H, W) in [0, 1]."""
    arr = ensure_image(img)
    return arr[..., 0] * 0.299 + arr[..., 1] * 0.587 + arr[..., 2] * 0.114


# ---------------------------------------------------------------------------
# geometric warps (augmentation + resize share the same bilinear sampler)
# ---------------------------------------------------------------------------


def _bilinear_gather(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample img at fractional (rows, cols) with edge replication."""
    h, w = img.shape[:2]
    rows = np.clip(rows, 0.0, h - 1.0)
    cols = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[..., None]
    fc = (cols - c0)[..., None]
    top = img[r0, c0] * (1.0 - fc) + img[r0, c1] * fc
    bot = img[r1, c0] * (1.0 - fc) + img[r1, c1] * fc
    return top * (1.0 - fr) + bot * fr


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of an (H, W, 3) or (H, W) array (align-corners grid)."""
    arr = np.asarray(img, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[..., None]
    h, w = arr.shape[:2]
    rows = np.linspace(0.0, h - 1.0, height)[:, None] * np.ones((1, width))
    cols = np.ones((height, 1)) * np.linspace(0.0, w - 1.0, width)[None, :]
    out = _bilinear_gather(arr, rows, cols)
    return out[..., 0] if squeeze else out


@dataclass
class AugmentConfig:
    """Training-time augmentation: flip, shift, rotation, scaling.

    Defaults follow the canonical recipe: rotation up to +/-15 degrees,
    shift up to +/-8 px, scale in [0.9, 1.1]. The scale range must
    contain 1.0 so the identity stays reachable.
    """

    flip: bool = True
    max_shift: int = 8
    max_rotation_deg: float = 15.0
    scale_min: float = 0.9
    scale_max: float = 1.1
    seed: int = 0

    def __post_init__(self):
        if not (self.scale_min <= 1.0 <= self.scale_max):
            raise ValueError("scale range must contain 1.0")
        if self.max_shift < 0 or self.max_rotation_deg < 0:
            raise ValueError("shift/rotation bounds must be non-negative")

    @property
    def enabled(self) -> bool:
        return (
            self.flip
            or self.max_shift > 0
            or self.max_rotation_deg > 0
            or self.scale_min < 1.0
            or self.scale_max > 1.0
        )


@dataclass(frozen=True)
class AugmentParams:
    """One concrete draw from an AugmentConfig."""

    flip: bool = False
    angle_deg: float = 0.0
    scale: float = 1.0
    shift: tuple[float, float] = (0.0, 0.0)  # (dy, dx) in pixels

    @property
    def is_identity(self) -> bool:
        return (
            not self.flip
            and self.angle_deg == 0.0
            and self.scale == 1.0
            and self.shift == (0.0, 0.0)
        )


def sample_augment_params(cfg: AugmentConfig, rng: np.random.Generator) -> AugmentParams:
    flip = cfg.flip and bool(rng.random() < 0.5)
    angle = float(rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)) if cfg.max_rotation_deg > 0 else 0.0
    scale = float(rng.uniform(cfg.scale_min, cfg.scale_max))
    if cfg.max_shift > 0:
        dy = float(rng.integers(-cfg.max_shift, cfg.max_shift + 1))
        dx = float(rng.integers(-cfg.max_shift, cfg.max_shift + 1))
    else:
        dy = dx = 0.0
    return AugmentParams(flip=flip, angle_deg=angle, scale=scale, shift=(dy, dx))


def _source_coords(params: AugmentParams, h: int, w: int):
    """Inverse map: for every output pixel, the input coordinate to sample.

    Forward model: flip, then rotate by angle and scale about the image
    center, then translate by shift.
    """
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    dy, dx = params.shift
    rows_out, cols_out = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    yo = rows_out - cy - dy
    xo = cols_out - cx - dx
    theta = np.deg2rad(params.angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    # inverse of scale*R(theta): R(-theta)/scale
    yi = (sin_t * xo + cos_t * yo) / params.scale + cy
    xi = (cos_t * xo - sin_t * yo) / params.scale + cx
    if params.flip:
        xi = (w - 1) - xi
    return yi, xi


def apply_augment(img: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Warp an image by the sampled transform (bilinear, edge replication)."""
    arr = ensure_image(img)
    if params.is_identity:
        return arr.copy()
    if params.angle_deg == 0.0 and params.scale == 1.0 and params.shift == (0.0, 0.0):
        return arr[:, ::-1].copy()  # pure flip stays exact
    rows, cols = _source_coords(params, arr.shape[0], arr.shape[1])
    return _bilinear_gather(arr, rows, cols)


def apply_augment_labels(labels: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Warp an integer label map by the same transform, nearest-neighbor."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"labels: expected (H, W) array, got shape {arr.shape}")
    if params.is_identity:
        return arr.copy()
    if params.angle_deg == 0.0 and params.scale == 1.0 and params.shift == (0.0, 0.0):
        return arr[:, ::-1].copy()
    rows, cols = _source_coords(params, arr.shape[0], arr.shape[1])
    h, w = arr.shape
    r = np.clip(np.rint(rows), 0, h - 1).astype(np.intp)
    c = np.clip(np.rint(cols), 0, w - 1).astype(np.intp)
    return arr[r, c]


def augment(img: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw a random transform from cfg and apply it.

    Deterministic for a fixed (img, cfg, rng state); with rng=None a fresh
    generator is seeded from cfg.seed.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if not cfg.enabled:
        return ensure_image(img).copy()
    return apply_augment(img, sample_augment_params(cfg, rng))
