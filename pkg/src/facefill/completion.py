"""Inference pipeline: noise fill, generate, composite, optional blending.

The compositor keeps every non-mask pixel bit-identical to the input; the
optional Poisson step re-solves the mask interior so the pasted content
keeps the generator's gradients while matching the surrounding colors at
the boundary, removing seams.
"""

from __future__ import annotations

import inspect
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .imaging import ensure_image
from .masking import MaskSpec, fill_noise, warn_if_oversized
from .networks import CompletionModel, generator_forward

POISSON_RESIDUAL_LIMIT = 1e-4
# solver runs well past the 1e-4 contract so solutions agree with a dense
# direct solve to 1e-6 even on ill-conditioned elongated masks
POISSON_CG_TOL = 1e-12
_CG_KW = "rtol" if "rtol" in inspect.signature(spla.cg).parameters else "tol"


@dataclass
class CompletionRequest:
    """One completion job: what to fill, how to seed it, whether to blend."""

    image: np.ndarray
    mask: MaskSpec
    seed: int = 0
    blend: bool = False

    def __post_init__(self):
        ensure_image(self.image, "image")
        if self.image.shape[:2] != self.mask.shape:
            raise ValueError(f"image {self.image.shape[:2]} and mask {self.mask.shape} sizes differ")


@dataclass
class GuidanceField:
    """Forward-difference gradients of the source content.

    gx[r, c] = s[r, c+1] - s[r, c] (zero in the last column) and likewise
    gy down rows; zero padding encodes the missing neighbors at the image
    border so the blend equations never read outside the frame.
    """

    gx: np.ndarray
    gy: np.ndarray


def composite(original: np.ndarray, generated: np.ndarray, mask: MaskSpec) -> np.ndarray:
    """Masked pixels from the generated image, everything else original.

    Selection is per element, so non-mask pixels are bit-identical to the
    original and the operation is idempotent.
    """
    ensure_image(original, "original")
    ensure_image(generated, "generated")
    if original.shape != generated.shape:
        raise ValueError(f"shape mismatch: {original.shape} vs {generated.shape}")
    if original.shape[:2] != mask.shape:
        raise ValueError(f"image {original.shape[:2]} and mask {mask.shape} sizes differ")
    return np.where(mask.bitmap[:, :, None], generated, original)


def guidance_field(source: np.ndarray) -> GuidanceField:
    gx = np.zeros_like(source)
    gy = np.zeros_like(source)
    gx[:, :-1, :] = source[:, 1:, :] - source[:, :-1, :]
    gy[:-1, :, :] = source[1:, :, :] - source[:-1, :, :]
    return GuidanceField(gx=gx, gy=gy)


def _laplacian_of_source(gf: GuidanceField) -> np.ndarray:
    """Per pixel, sum of (s_p - s_q) over in-image neighbors q.

    Computed as the negated backward-difference divergence of the forward
    gradients; the zero padding makes border pixels drop exactly the
    out-of-image terms, which keeps source == target an exact fixed point
    of the blend.
    """
    gx, gy = gf.gx, gf.gy
    out = -gx - gy
    out[:, 1:, :] += gx[:, :-1, :]
    out[1:, :, :] += gy[:-1, :, :]
    return out


def _blend_system(bitmap: np.ndarray):
    """Sparse SPD system over masked pixels; returns (A, boundary, masks).

    Row p: (#in-image neighbors)·u(p) - sum of u(q) over in-mask neighbors,
    equal to the sum of target values over in-image non-mask neighbors plus
    the guidance term. boundary maps each row to the neighbor coordinates
    contributing known target values.
    """
    h, w = bitmap.shape
    n = int(bitmap.sum())
    index = np.full((h, w), -1, dtype=np.int64)
    pr, pc = np.nonzero(bitmap)
    index[pr, pc] = np.arange(n)

    diag = np.zeros(n)
    rows, cols, vals = [], [], []
    boundary_rows, boundary_r, boundary_c = [], [], []
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        qr, qc = pr + dr, pc + dc
        inside = (qr >= 0) & (qr < h) & (qc >= 0) & (qc < w)
        diag += inside
        qin_r, qin_c = qr[inside], qc[inside]
        p_of_q = np.nonzero(inside)[0]
        in_mask = bitmap[qin_r, qin_c]
        rows.append(p_of_q[in_mask])
        cols.append(index[qin_r[in_mask], qin_c[in_mask]])
        vals.append(-np.ones(int(in_mask.sum())))
        boundary_rows.append(p_of_q[~in_mask])
        boundary_r.append(qin_r[~in_mask])
        boundary_c.append(qin_c[~in_mask])

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    a = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    boundary = (np.concatenate(boundary_rows), np.concatenate(boundary_r), np.concatenate(boundary_c))
    return a, boundary, (pr, pc)


def poisson_blend(target: np.ndarray, source: np.ndarray, mask: MaskSpec) -> np.ndarray:
    """Re-solve mask pixels to carry source gradients and target boundary.

    Per channel, conjugate gradients on the discrete Poisson system (at
    most 10x the unknown count iterations), started from the source
    values. The solved system's residual must come out at or below 1e-4
    in max norm; pixels outside the mask pass through unchanged.
    """
    ensure_image(target, "target")
    ensure_image(source, "source")
    if target.shape != source.shape:
        raise ValueError(f"shape mismatch: {target.shape} vs {source.shape}")
    if target.shape[:2] != mask.shape:
        raise ValueError(f"image {target.shape[:2]} and mask {mask.shape} sizes differ")
    if mask.is_empty:
        raise ValueError("poisson_blend requires a nonempty mask")

    bitmap = mask.bitmap
    a, (b_rows, b_r, b_c), (pr, pc) = _blend_system(bitmap)
    lap = _laplacian_of_source(guidance_field(source))
    n = len(pr)
    out = target.copy()
    for ch in range(target.shape[2]):
        rhs = lap[pr, pc, ch].copy()
        np.add.at(rhs, b_rows, target[b_r, b_c, ch])
        x0 = source[pr, pc, ch]
        solution, _ = spla.cg(a, rhs, x0=x0, maxiter=10 * n, atol=0.0, **{_CG_KW: POISSON_CG_TOL})
        residual = np.abs(a @ solution - rhs).max()
        if residual > POISSON_RESIDUAL_LIMIT:
            raise ArithmeticError(f"blend solve residual {residual:.3e} exceeds {POISSON_RESIDUAL_LIMIT}")
        out[pr, pc, ch] = solution
    return np.clip(out, 0.0, 1.0)


def complete(request: CompletionRequest, model: CompletionModel) -> np.ndarray:
    """Full pipeline: seed the mask with noise, generate, composite, blend.

    Deterministic per (request, model); different seeds change only mask
    pixels when blending is off. An empty mask short-circuits to the input.
    """
    if model is None:
        raise ValueError("no completion model loaded")
    size = model.image_size
    if request.image.shape[:2] != (size, size):
        raise ValueError(f"model expects {size}x{size} images, got {request.image.shape[:2]}")
    if request.mask.is_empty:
        warnings.warn("empty mask: returning the input unchanged", stacklevel=2)
        return request.image.copy()
    warn_if_oversized(request.mask)
    rng = np.random.default_rng(request.seed)
    network_input = fill_noise(request.image, request.mask, rng)
    generated = generator_forward(model.generator, network_input)
    out = composite(request.image, generated, request.mask)
    if request.blend:
        out = poisson_blend(out, generated, request.mask)
    return out
