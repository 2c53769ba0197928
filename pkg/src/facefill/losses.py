"""Training objectives: reconstruction, local/global adversarial, parsing.

Every operation accepts either numpy arrays (the pixel currency, used by the
oracle checks) or torch tensors (used inside the training loop, where the
values must stay on the autograd tape). The combined objective gates terms
by curriculum stage: stage 1 is reconstruction only, stage 2 adds the local
adversarial term, stage 3 adds the global adversarial and parsing terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

LOG_RECORD_KEYS = ("step", "stage", "l_r", "l_a1", "l_a2", "l_p", "total")


def _is_torch(*values) -> bool:
    return any(isinstance(v, torch.Tensor) for v in values)


def _check_probability(value, name: str) -> None:
    if isinstance(value, torch.Tensor):
        bad = bool((value <= 0).any()) or bool((value >= 1).any())
    else:
        arr = np.asarray(value, dtype=np.float64)
        bad = bool((arr <= 0).any()) or bool((arr >= 1).any())
    if bad:
        raise ValueError(f"{name} must lie strictly inside (0, 1)")


@dataclass
class LossWeights:
    """Coefficients of the combined objective."""

    local_adv: float = 300.0
    global_adv: float = 300.0
    parsing: float = 0.005

    def __post_init__(self):
        for name in ("local_adv", "global_adv", "parsing"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


def reconstruction_loss(generated, original):
    """Mean squared difference over all pixels and channels.

    The mean (rather than sum) keeps the weight coefficients meaningful
    across image and mask sizes. Covers the whole image: the compositor
    restores non-mask pixels at inference, and penalizing the full frame
    keeps the decoder from drifting outside the mask.
    """
    if _is_torch(generated, original):
        if generated.shape != original.shape:
            raise ValueError(f"shape mismatch: {tuple(generated.shape)} vs {tuple(original.shape)}")
        return ((generated - original) ** 2).mean()
    a = np.asarray(generated, dtype=np.float64)
    b = np.asarray(original, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def adversarial_d_loss(d_real, d_fake):
    """Discriminator objective: -[log d(real) + log(1 - d(fake))], batch mean.

    Minimizing this is the discriminator's half of the two-player game.
    Inputs are probabilities and must lie strictly inside (0, 1); the
    training loop clamps raw sigmoid outputs before calling.
    """
    _check_probability(d_real, "d_real")
    _check_probability(d_fake, "d_fake")
    if _is_torch(d_real, d_fake):
        return -(torch.log(d_real).mean() + torch.log1p(-d_fake).mean())
    real = np.asarray(d_real, dtype=np.float64)
    fake = np.asarray(d_fake, dtype=np.float64)
    return float(-(np.mean(np.log(real)) + np.mean(np.log1p(-fake))))


def adversarial_g_loss(d_fake):
    """Generator objective: -log d(fake), batch mean.

    Non-saturating form: decreasing in d_fake with strong gradients when the
    discriminator confidently rejects the sample, unlike log(1 - d(fake))
    which vanishes there.
    """
    _check_probability(d_fake, "d_fake")
    if _is_torch(d_fake):
        return -torch.log(d_fake).mean()
    return float(-np.mean(np.log(np.asarray(d_fake, dtype=np.float64))))


def parsing_loss(logits, labels):
    """Pixel-wise softmax cross-entropy against integer label maps.

    Array route: logits channels-last (..., H, W, C) with labels (..., H, W).
    Torch route: logits (N, C, H, W) with labels (N, H, W), the layout the
    parsing network produces.
    """
    if _is_torch(logits, labels):
        if logits.ndim != 4:
            raise ValueError(f"torch logits must be (N, C, H, W), got {tuple(logits.shape)}")
        return F.cross_entropy(logits, labels.long())
    lg = np.asarray(logits, dtype=np.float64)
    lb = np.asarray(labels)
    if lg.shape[:-1] != lb.shape:
        raise ValueError(f"logits {lg.shape} and labels {lb.shape} spatial shapes differ")
    n_classes = lg.shape[-1]
    if lb.size and (lb.min() < 0 or lb.max() >= n_classes):
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    shifted = lg - lg.max(axis=-1, keepdims=True)
    log_prob = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(log_prob, lb[..., None].astype(np.int64), axis=-1)[..., 0]
    return float(-picked.mean())


def stage_enables(stage: int) -> tuple[bool, bool]:
    """(local adversarial on, global adversarial + parsing on) for a stage."""
    if stage not in (1, 2, 3):
        raise ValueError(f"stage must be 1, 2 or 3, got {stage}")
    return stage >= 2, stage >= 3


def total_loss(l_r, l_a1, l_a2, l_p, weights: LossWeights, stage: int):
    """Weighted sum of the enabled terms for the given curriculum stage."""
    use_local, use_global = stage_enables(stage)
    total = l_r
    if use_local:
        total = total + weights.local_adv * l_a1
    if use_global:
        total = total + weights.global_adv * l_a2 + weights.parsing * l_p
    return total


@dataclass
class LossReport:
    """Per-step loss record; the wire contract of the training log."""

    l_r: float
    l_a1: float
    l_a2: float
    l_p: float
    total: float
    stage: int

    @classmethod
    def from_terms(cls, l_r, l_a1, l_a2, l_p, weights: LossWeights, stage: int) -> "LossReport":
        return cls(
            l_r=float(l_r),
            l_a1=float(l_a1),
            l_a2=float(l_a2),
            l_p=float(l_p),
            total=float(total_loss(l_r, l_a1, l_a2, l_p, weights, stage)),
            stage=int(stage),
        )

    def to_record(self, step: int) -> dict:
        """Ordered log record with exactly the documented keys."""
        return {
            "step": int(step),
            "stage": self.stage,
            "l_r": self.l_r,
            "l_a1": self.l_a1,
            "l_a2": self.l_a2,
            "l_p": self.l_p,
            "total": self.total,
        }
