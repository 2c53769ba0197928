"""Completion quality metrics and the benchmark harnesses built on them.

Three metrics: PSNR on raw pixel differences, SSIM on the luminance
channel, and an identity distance between unit-norm face embeddings. The
harnesses evaluate completers (any callable (image, mask, seed) -> image)
over the fixed O1-O6 masks, over the 16..80 mask-size sweep, and in a
gallery/probe face recognition experiment.

The embedder is pluggable. The default is a fixed-seed random
convolutional projector: reproducible, download-free, and sufficient to
rank completions on the synthetic desk-scale sets. An adapter for a real
face-embedding model can be dropped in anywhere an embedder is accepted.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.signal import convolve2d

from .completion import CompletionRequest, complete
from .imaging import ensure_image, luminance, resize_bilinear
from .masking import MaskSpec, fill_noise, sample_sweep_mask, standard_eval_masks, sweep_mask_sizes
from .networks import CompletionModel

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
METRIC_NAMES = ("SSIM", "PSNR", "identity")

Completer = Callable[[np.ndarray, MaskSpec, int], np.ndarray]


@dataclass
class EvalRow:
    """(mask or size) x metric x model cell of a results table."""

    mask_id: str
    metric: str
    model_tag: str
    value: float

    def __post_init__(self):
        if self.metric not in METRIC_NAMES:
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class RecognitionRow:
    """Probe variant x mask x K cell of the recognition accuracy table."""

    variant: str
    mask_id: str
    k: int
    accuracy: float


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over the full image.

    Unit dynamic range, so 10*log10(1/MSE); identical images hit the
    99 dB cap instead of infinity.
    """
    ensure_image(a, "a")
    ensure_image(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local structural similarity on the luminance channel.

    11x11 Gaussian windows (sigma 1.5), K1=0.01, K2=0.03, dynamic range
    1.0; windows fully inside the image (valid convolution).
    """
    ensure_image(a, "a")
    ensure_image(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    x = luminance(a)
    y = luminance(b)
    w = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = convolve2d(x, w, mode="valid")
    mu_y = convolve2d(y, w, mode="valid")
    var_x = convolve2d(x * x, w, mode="valid") - mu_x**2
    var_y = convolve2d(y * y, w, mode="valid") - mu_y**2
    cov = convolve2d(x * y, w, mode="valid") - mu_x * mu_y
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / ((mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2))
    return float(ssim_map.mean())


@dataclass
class EmbeddingVector:
    """Unit-norm identity representation of one face image."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError(f"embedding must be a vector, got shape {v.shape}")
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm:.8f} is not 1 within 1e-6")
        self.values = v


class Embedder(Protocol):
    def __call__(self, img: np.ndarray) -> EmbeddingVector: ...


class RandomConvEmbedder:
    """Fixed-seed random convolutional projector with unit normalization.

    Resizes to a small frame, applies a random 5x5 filter bank at stride 2
    with a rectifier, appends a constant feature so no image maps to the
    zero vector, and projects to `dim` dimensions. Deterministic per seed.
    """

    def __init__(self, dim: int = 64, seed: int = 0, input_size: int = 32, n_filters: int = 8):
        self.dim = dim
        self.input_size = input_size
        rng = np.random.default_rng(seed)
        self.filters = rng.normal(0.0, 1.0 / math.sqrt(75), size=(n_filters, 5, 5, 3))
        out_side = (input_size - 5) // 2 + 1
        n_features = n_filters * out_side * out_side + 1
        self.projection = rng.normal(0.0, 1.0 / math.sqrt(n_features), size=(dim, n_features))

    def __call__(self, img: np.ndarray) -> EmbeddingVector:
        ensure_image(img, "img")
        x = img
        if x.shape[:2] != (self.input_size, self.input_size):
            x = resize_bilinear(x, self.input_size, self.input_size)
        # sliding_window_view with axis=(0, 1) yields (h, w, c, i, j)
        patches = np.lib.stride_tricks.sliding_window_view(x, (5, 5), axis=(0, 1))[::2, ::2]
        feat = np.einsum("hwcij,fijc->hwf", patches, self.filters)
        feat = np.maximum(feat, 0.0).ravel()
        feat = np.concatenate([feat, [1.0]])
        raw = self.projection @ feat
        norm = float(np.linalg.norm(raw))
        if norm < 1e-9:
            raise RuntimeError("embedder produced a degenerate zero vector")
        return EmbeddingVector(values=raw / norm)


def identity_distance(a: np.ndarray, b: np.ndarray, embedder: Embedder) -> float:
    """Squared Euclidean distance between unit embeddings; range [0, 4]."""
    ea = embedder(a)
    eb = embedder(b)
    d = float(np.sum((ea.values - eb.values) ** 2))
    return min(max(d, 0.0), 4.0)


def identity_completer(image: np.ndarray, mask: MaskSpec, seed: int) -> np.ndarray:
    """Perfect completion oracle: returns the original pixels."""
    return image.copy()


def noise_completer(image: np.ndarray, mask: MaskSpec, seed: int) -> np.ndarray:
    """No-model baseline: leaves the noise fill in the mask."""
    return fill_noise(image, mask, np.random.default_rng(seed))


def model_completer(model: CompletionModel, blend: bool = False) -> Completer:
    """Wrap a trained model as a completer for the harnesses."""

    def run(image: np.ndarray, mask: MaskSpec, seed: int) -> np.ndarray:
        return complete(CompletionRequest(image=image, mask=mask, seed=seed, blend=blend), model)

    return run


def _metric_values(original: np.ndarray, completed: np.ndarray, embedder: Embedder) -> dict:
    return {
        "SSIM": ssim(completed, original),
        "PSNR": psnr(completed, original),
        "identity": identity_distance(completed, original, embedder),
    }


def evaluate_masks(
    completers: dict[str, Completer],
    dataset: Sequence[np.ndarray],
    masks: Sequence[MaskSpec] | None = None,
    embedder: Embedder | None = None,
    seed: int = 0,
) -> list[EvalRow]:
    """Mean metrics per benchmark mask per model, rows in table layout.

    For each mask and model tag, completes every dataset image and averages
    each metric against the original. Iteration order is dataset order, so
    the reduction is deterministic.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if masks is None:
        masks = standard_eval_masks(image_size=dataset[0].shape[0])
    embedder = embedder or RandomConvEmbedder()
    rows = []
    for metric in METRIC_NAMES:
        for mask in masks:
            for tag, completer in completers.items():
                total = 0.0
                for i, img in enumerate(dataset):
                    completed = completer(img, mask, seed + i)
                    total += _metric_values(img, completed, embedder)[metric]
                rows.append(EvalRow(mask_id=mask.source, metric=metric, model_tag=tag, value=total / len(dataset)))
    return rows


def mask_size_sweep(
    completers: dict[str, Completer],
    dataset: Sequence[np.ndarray],
    embedder: Embedder | None = None,
    seed: int = 0,
) -> list[EvalRow]:
    """Mean metrics across square mask sizes 16..80 (step 8).

    Mask positions are uniform per image from a fixed-seed generator, so
    repeated calls reproduce the same table.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    embedder = embedder or RandomConvEmbedder()
    image_size = dataset[0].shape[0]
    rows = []
    for size in sweep_mask_sizes():
        if size > image_size:
            raise ValueError(f"sweep size {size} exceeds image size {image_size}")
        rng = np.random.default_rng(seed + size)
        masks = [sample_sweep_mask(rng, image_size, size) for _ in dataset]
        sums = {tag: dict.fromkeys(METRIC_NAMES, 0.0) for tag in completers}
        for i, img in enumerate(dataset):
            for tag, completer in completers.items():
                completed = completer(img, masks[i], seed + i)
                for metric, value in _metric_values(img, completed, embedder).items():
                    sums[tag][metric] += value
        for metric in METRIC_NAMES:
            for tag in completers:
                rows.append(
                    EvalRow(mask_id=str(size), metric=metric, model_tag=tag, value=sums[tag][metric] / len(dataset))
                )
    return rows


@dataclass
class RecognitionSplit:
    """Gallery and probe halves of an identity-labeled image set."""

    gallery: list[tuple[np.ndarray, str]]
    probe: list[tuple[np.ndarray, str]]

    def __post_init__(self):
        gallery_ids = {identity for _, identity in self.gallery}
        missing = {identity for _, identity in self.probe} - gallery_ids
        if missing:
            raise ValueError(f"probe identities missing from gallery: {sorted(missing)}")


def make_recognition_split(images_by_identity: dict[str, Sequence[np.ndarray]], seed: int = 0) -> RecognitionSplit:
    """Alternate each identity's images between sides for balanced counts."""
    rng = np.random.default_rng(seed)
    gallery, probe = [], []
    for identity in sorted(images_by_identity):
        images = list(images_by_identity[identity])
        if len(images) < 2:
            raise ValueError(f"identity {identity!r} needs at least 2 images to split")
        order = rng.permutation(len(images))
        for slot, img_idx in enumerate(order):
            (gallery if slot % 2 == 0 else probe).append((images[img_idx], identity))
    return RecognitionSplit(gallery=gallery, probe=probe)


def _top_k_hit(distances: np.ndarray, same_identity: np.ndarray, k: int) -> bool:
    """Whether a matching gallery item sits within the k nearest.

    Uses the kth-smallest distance as a membership threshold, so ties at
    the cutoff count for every ordering of the gallery — accuracy is then
    invariant to gallery permutation.
    """
    kth = np.partition(distances, k - 1)[k - 1]
    return bool(np.any(distances[same_identity] <= kth))


def recognition_experiment(
    completers: dict[str, Completer | None],
    split: RecognitionSplit,
    masks: Sequence[MaskSpec] | None = None,
    ks: Sequence[int] = (1, 3, 5),
    embedder: Embedder | None = None,
    seed: int = 0,
) -> list[RecognitionRow]:
    """Top-K identification accuracy per probe variant, mask, and K.

    Gallery faces stay uncorrupted. A completer of None means the probe is
    used as-is (the upper-bound variant); any other completer sees the
    probe with the benchmark mask applied. K beyond the gallery size is an
    error.
    """
    embedder = embedder or RandomConvEmbedder()
    if masks is None:
        masks = standard_eval_masks(image_size=split.gallery[0][0].shape[0])
    if max(ks) > len(split.gallery):
        raise ValueError(f"K={max(ks)} exceeds gallery size {len(split.gallery)}")
    gallery_emb = np.stack([embedder(img).values for img, _ in split.gallery])
    gallery_ids = np.array([identity for _, identity in split.gallery])
    rows = []
    for variant, completer in completers.items():
        for mask in masks:
            hits = dict.fromkeys(ks, 0)
            for i, (img, identity) in enumerate(split.probe):
                probe_img = img if completer is None else completer(img, mask, seed + i)
                e = embedder(probe_img).values
                distances = np.sum((gallery_emb - e) ** 2, axis=1)
                same = gallery_ids == identity
                for k in ks:
                    hits[k] += _top_k_hit(distances, same, k)
            for k in ks:
                rows.append(
                    RecognitionRow(variant=variant, mask_id=mask.source, k=k, accuracy=hits[k] / len(split.probe))
                )
    return rows


def label_f_scores(predicted: np.ndarray, truth: np.ndarray, num_labels: int = 11) -> tuple[dict[int, float], float]:
    """Per-class F1 between label maps, and their mean as the overall score.

    The overall score averages the non-background classes present in the
    ground truth; a class predicted nowhere and absent from truth does not
    dilute the mean. Background is class 0.
    """
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {truth.shape}")
    per_class = {}
    present = []
    for label in range(num_labels):
        tp = int(np.sum((predicted == label) & (truth == label)))
        fp = int(np.sum((predicted == label) & (truth != label)))
        fn = int(np.sum((predicted != label) & (truth == label)))
        denom = 2 * tp + fp + fn
        score = (2 * tp / denom) if denom else 1.0
        per_class[label] = score
        if label != 0 and (tp + fn) > 0:
            present.append(score)
    overall = float(np.mean(present)) if present else 1.0
    return per_class, overall


def eval_table_csv(rows: Sequence[EvalRow], metric: str) -> str:
    """One metric's table: mask rows by model-tag columns."""
    picked = [r for r in rows if r.metric == metric]
    tags = sorted({r.model_tag for r in picked})
    mask_ids = list(dict.fromkeys(r.mask_id for r in picked))
    cells = {(r.mask_id, r.model_tag): r.value for r in picked}
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["mask_id", *tags])
    for mask_id in mask_ids:
        writer.writerow([mask_id, *[f"{cells[(mask_id, tag)]:.6f}" for tag in tags]])
    return buf.getvalue()


def sweep_csv(rows: Sequence[EvalRow]) -> str:
    """(size, metric, model_tag, value) triples for plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["size", "metric", "model_tag", "value"])
    for r in rows:
        writer.writerow([r.mask_id, r.metric, r.model_tag, f"{r.value:.6f}"])
    return buf.getvalue()


def recognition_csv(rows: Sequence[RecognitionRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["variant", "mask_id", "k", "accuracy"])
    for r in rows:
        writer.writerow([r.variant, r.mask_id, r.k, f"{r.accuracy:.6f}"])
    return buf.getvalue()


def render_sweep_plot(rows: Sequence[EvalRow], path, metric: str = "PSNR") -> None:
    """Optional line plot of one sweep metric; needs matplotlib installed."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    picked = [r for r in rows if r.metric == metric]
    tags = sorted({r.model_tag for r in picked})
    fig, ax = plt.subplots(figsize=(6, 4))
    for tag in tags:
        pairs = sorted((int(r.mask_id), r.value) for r in picked if r.model_tag == tag)
        ax.plot([p[0] for p in pairs], [p[1] for p in pairs], marker="o", label=tag)
    ax.set_xlabel("mask size (px)")
    ax.set_ylabel(metric)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
