"""Deterministic synthetic face sets for desk-scale runs.

Faces are drawn from layered ellipses on a coordinate grid: hair behind an
elliptical head, two eyebrows, two eyes, a nose, and a three-part mouth
(upper lip, inner mouth, lower lip) over a plain background. Every region
carries its ground-truth label, so the same renderer feeds completion
training (images), parser training (image/label pairs), and the
recognition experiment (several jittered images per identity).

Geometry is nearly constant and colors carry the identity: that keeps the
sets easy enough for small CPU-trained networks while still separating
identities. Left and right features get slightly different shades so the
side-specific labels stay distinguishable at low capacity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LABEL_BACKGROUND = 0
LABEL_SKIN = 1
LABEL_LEFT_BROW = 2
LABEL_RIGHT_BROW = 3
LABEL_LEFT_EYE = 4
LABEL_RIGHT_EYE = 5
LABEL_NOSE = 6
LABEL_UPPER_LIP = 7
LABEL_INNER_MOUTH = 8
LABEL_LOWER_LIP = 9
LABEL_HAIR = 10


@dataclass(frozen=True)
class FaceParams:
    """One identity: its palette plus small geometric offsets."""

    background: tuple
    skin: tuple
    hair: tuple
    eye: tuple
    brow: tuple
    lip: tuple
    mouth: tuple
    face_rx: float
    eye_dx: float
    eye_y: float


def _uniform_rgb(rng: np.random.Generator, lo, hi) -> tuple:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    return tuple(lo + rng.random(3) * (hi - lo))


def sample_face_params(rng: np.random.Generator) -> FaceParams:
    return FaceParams(
        background=_uniform_rgb(rng, (0.08, 0.10, 0.15), (0.30, 0.32, 0.40)),
        skin=_uniform_rgb(rng, (0.62, 0.45, 0.32), (0.92, 0.72, 0.58)),
        hair=_uniform_rgb(rng, (0.02, 0.02, 0.02), (0.45, 0.35, 0.30)),
        eye=_uniform_rgb(rng, (0.05, 0.15, 0.25), (0.35, 0.55, 0.75)),
        brow=_uniform_rgb(rng, (0.05, 0.03, 0.02), (0.30, 0.22, 0.18)),
        lip=_uniform_rgb(rng, (0.55, 0.15, 0.20), (0.85, 0.35, 0.45)),
        mouth=_uniform_rgb(rng, (0.25, 0.02, 0.05), (0.45, 0.12, 0.15)),
        face_rx=0.30 + float(rng.random()) * 0.03,
        eye_dx=0.13 + float(rng.random()) * 0.02,
        eye_y=0.47 + float(rng.random()) * 0.02,
    )


def _ellipse(yy, xx, cy, cx, ry, rx):
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def render_face(params: FaceParams, size: int = 64, jitter_rng: np.random.Generator | None = None):
    """Draw one face; returns (image (size,size,3) in [0,1], labels (size,size)).

    jitter_rng, when given, perturbs colors and feature positions slightly
    to make several distinct images of the same identity.
    """
    if size < 16:
        raise ValueError(f"size must be at least 16, got {size}")
    color_jit = np.zeros(3)
    dy = dx = 0.0
    if jitter_rng is not None:
        color_jit = (jitter_rng.random(3) - 0.5) * 0.06
        dy, dx = (jitter_rng.random(2) - 0.5) * 0.02

    ax = np.linspace(0.0, 1.0, size)
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    cy, cx = 0.56 + dy, 0.50 + dx
    eye_y = params.eye_y + dy
    eye_dx = params.eye_dx

    def paint(region, color, label_value):
        img[region] = np.clip(np.asarray(color) + color_jit, 0.0, 1.0)
        labels[region] = label_value

    img = np.empty((size, size, 3), dtype=np.float64)
    labels = np.full((size, size), LABEL_BACKGROUND, dtype=np.int64)
    img[:] = np.clip(np.asarray(params.background) + color_jit, 0.0, 1.0)

    paint(_ellipse(yy, xx, cy - 0.16, cx, 0.40, params.face_rx + 0.07), params.hair, LABEL_HAIR)
    face = _ellipse(yy, xx, cy, cx, 0.36, params.face_rx)
    paint(face, params.skin, LABEL_SKIN)
    # gentle radial shading so faces are not piecewise constant
    shade = 1.0 - 0.10 * (((yy - cy) / 0.36) ** 2 + ((xx - cx) / params.face_rx) ** 2)
    img[face] *= shade[face][:, None]

    right_tint = np.array([0.06, 0.04, 0.02])
    brow_y = eye_y - 0.085
    paint(_ellipse(yy, xx, brow_y, cx - eye_dx, 0.030, 0.065), params.brow, LABEL_LEFT_BROW)
    paint(_ellipse(yy, xx, brow_y, cx + eye_dx, 0.030, 0.065), np.asarray(params.brow) + right_tint, LABEL_RIGHT_BROW)
    paint(_ellipse(yy, xx, eye_y, cx - eye_dx, 0.045, 0.060), params.eye, LABEL_LEFT_EYE)
    paint(_ellipse(yy, xx, eye_y, cx + eye_dx, 0.045, 0.060), np.asarray(params.eye) + right_tint, LABEL_RIGHT_EYE)
    paint(_ellipse(yy, xx, cy + 0.05, cx, 0.070, 0.040), np.asarray(params.skin) * 0.88, LABEL_NOSE)
    mouth_y = cy + 0.19
    paint(_ellipse(yy, xx, mouth_y - 0.030, cx, 0.028, 0.105), params.lip, LABEL_UPPER_LIP)
    paint(_ellipse(yy, xx, mouth_y + 0.032, cx, 0.030, 0.100), np.clip(np.asarray(params.lip) * 1.08, 0, 1), LABEL_LOWER_LIP)
    paint(_ellipse(yy, xx, mouth_y, cx, 0.018, 0.085), params.mouth, LABEL_INNER_MOUTH)

    return np.clip(img, 0.0, 1.0), labels


def make_face_dataset(n: int, size: int = 64, seed: int = 0) -> list[np.ndarray]:
    """n distinct faces (images only), deterministic per seed."""
    rng = np.random.default_rng(seed)
    return [render_face(sample_face_params(rng), size=size)[0] for _ in range(n)]


def make_parsing_dataset(n: int, size: int = 64, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """n (image, label-map) pairs for parser training."""
    rng = np.random.default_rng(seed)
    return [render_face(sample_face_params(rng), size=size) for _ in range(n)]


def make_identity_dataset(
    n_identities: int, images_per_identity: int, size: int = 64, seed: int = 0
) -> dict[str, list[np.ndarray]]:
    """Several jittered renders per identity, for the recognition split."""
    rng = np.random.default_rng(seed)
    out: dict[str, list[np.ndarray]] = {}
    for i in range(n_identities):
        params = sample_face_params(rng)
        out[f"id{i:03d}"] = [render_face(params, size=size, jitter_rng=rng)[0] for _ in range(images_per_identity)]
    return out
