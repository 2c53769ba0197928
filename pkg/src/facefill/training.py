"""Three-stage completion training, parser training, and checkpointing.

Stage 1 trains the generator as a plain autoencoder on reconstruction,
stage 2 fine-tunes with the local adversarial term, and stage 3 adds the
global adversarial term plus the parsing regularizer, whose targets come
from a frozen parser applied to the original (unmasked) images and cached
up front. Discriminators are held back by an accuracy gate so they never
race ahead of the generator early on.

Determinism contract: a fixed seed plus single-worker loading yields a
byte-identical loss log. All data-side randomness (batch indices,
augmentation, mask placement, noise fill) flows from one numpy generator;
torch randomness only touches weight init, seeded at build time.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import shutil
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import FaceDataset
from .imaging import AugmentConfig, apply_augment, apply_augment_labels, sample_augment_params
from .losses import LossReport, LossWeights, adversarial_d_loss, adversarial_g_loss, parsing_loss, reconstruction_loss, total_loss
from .masking import fill_noise, sample_training_mask
from .networks import (
    CompletionModel,
    DiscriminatorSpec,
    GeneratorSpec,
    Parser,
    ParserSpec,
    build_model,
    local_window,
    parse_labels,
    parser_forward,
)

CHECKPOINT_FORMAT = "facefill-checkpoint-v1"
PARSER_CHECKPOINT_FORMAT = "facefill-parser-v1"
D_ACCURACY_THRESHOLD = 0.8
# sigmoid outputs can saturate to exact 0/1 in float32; keep them inside
# the open interval the loss functions require
PROB_EPS = 1e-6


class ConfigurationError(Exception):
    """Invalid or inconsistent run configuration."""


class CheckpointError(Exception):
    """Unreadable, incomplete, or incompatible checkpoint."""


@dataclass
class CurriculumSchedule:
    """Step budget per stage; stage order is fixed."""

    stage1_steps: int
    stage2_steps: int
    stage3_steps: int

    def __post_init__(self):
        for name in ("stage1_steps", "stage2_steps", "stage3_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def from_total(cls, total: int) -> "CurriculumSchedule":
        """Default split: 20% / 30% / 50% of the step budget."""
        s1 = round(total * 0.2)
        s2 = round(total * 0.3)
        return cls(stage1_steps=s1, stage2_steps=s2, stage3_steps=total - s1 - s2)

    @property
    def total_steps(self) -> int:
        return self.stage1_steps + self.stage2_steps + self.stage3_steps

    def stage_at(self, step: int) -> int:
        """Stage of 1-based step number `step`."""
        if not 1 <= step <= self.total_steps:
            raise ValueError(f"step {step} outside 1..{self.total_steps}")
        if step <= self.stage1_steps:
            return 1
        if step <= self.stage1_steps + self.stage2_steps:
            return 2
        return 3


@dataclass
class TrainConfig:
    """Everything one run needs besides the dataset itself."""

    image_size: int = 128
    mask_size: int = 64
    base_channels: int = 64
    bottleneck_dim: int = 2048
    batch_size: int = 16
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    out_dir: str = "runs/train"
    checkpoint_every: int = 500
    d_accuracy_threshold: float = D_ACCURACY_THRESHOLD
    weights: LossWeights = field(default_factory=LossWeights)
    schedule: CurriculumSchedule = field(default_factory=lambda: CurriculumSchedule.from_total(1000))
    augment: AugmentConfig | None = None
    parser_path: str | None = None
    model_tag: str = "completion"

    def __post_init__(self):
        size = self.image_size
        if size < 32 or (size & (size - 1)) != 0:
            raise ValueError(f"image_size must be a power of two >= 32, got {size}")
        if not 0 < self.mask_size <= size:
            raise ValueError(f"mask_size must be in 1..{size}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0.0 <= self.d_accuracy_threshold <= 1.0:
            raise ValueError("d_accuracy_threshold must be in [0, 1]")

    @property
    def local_crop(self) -> int:
        return self.image_size // 2

    def specs(self):
        gen = GeneratorSpec(image_size=self.image_size, base_channels=self.base_channels, bottleneck_dim=self.bottleneck_dim)
        local = DiscriminatorSpec(scope="local", input_size=self.local_crop, base_channels=self.base_channels)
        glob = DiscriminatorSpec(scope="global", input_size=self.image_size, base_channels=self.base_channels)
        parser = ParserSpec(image_size=self.image_size, base_channels=self.base_channels, bottleneck_dim=self.bottleneck_dim)
        return gen, local, glob, parser


def desk_train_config(out_dir: str, **overrides) -> TrainConfig:
    """CPU-sized defaults: 64px frames, narrow channels, small batches."""
    base = dict(
        image_size=64,
        mask_size=32,
        base_channels=12,
        bottleneck_dim=256,
        batch_size=8,
        checkpoint_every=500,
        schedule=CurriculumSchedule.from_total(300),
    )
    base.update(overrides)
    return TrainConfig(out_dir=out_dir, **base)


def train_config_from_dict(raw: dict) -> TrainConfig:
    """Build a run config from parsed structured text (YAML/JSON)."""
    raw = dict(raw)
    kwargs = {}
    schedule = raw.pop("schedule", None)
    if schedule is not None:
        if "total_steps" in schedule:
            kwargs["schedule"] = CurriculumSchedule.from_total(int(schedule["total_steps"]))
        else:
            kwargs["schedule"] = CurriculumSchedule(**{k: int(v) for k, v in schedule.items()})
    weights = raw.pop("weights", None)
    if weights is not None:
        kwargs["weights"] = LossWeights(**{k: float(v) for k, v in weights.items()})
    augment = raw.pop("augment", None)
    if augment is not None:
        kwargs["augment"] = AugmentConfig(**augment)
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown training config keys: {sorted(unknown)}")
    kwargs.update(raw)
    return TrainConfig(**kwargs)


def should_update_discriminator(recent_d_accuracy: float, threshold: float = D_ACCURACY_THRESHOLD) -> bool:
    """Skip the update only when the discriminator is already too strong.

    Strict inequality: accuracy exactly at the threshold still updates.
    """
    if not 0.0 <= recent_d_accuracy <= 1.0:
        raise ValueError(f"accuracy must be in [0, 1], got {recent_d_accuracy}")
    return not recent_d_accuracy > threshold


def parser_digest(parser: nn.Module) -> str:
    """Order-independent content hash of all parameters and buffers."""
    h = hashlib.sha256()
    items = sorted(parser.state_dict().items(), key=lambda kv: kv[0])
    for name, tensor in items:
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()


@dataclass
class LabelStore:
    """Cached parsing targets keyed by image id."""

    labels: dict[str, np.ndarray]
    digest: str
    recomputed: int


def cache_parsing_targets(parser: Parser, dataset, cache_dir=None) -> LabelStore:
    """Frozen-parser label maps of the original images, cached on disk.

    The cache is keyed by the parser's parameter digest: reruns with the
    same parser recompute nothing; a changed parser invalidates everything.
    Accepts a FaceDataset or an iterable of (id, image) pairs; a missing
    (None) image is skipped with a warning.
    """
    if any(p.requires_grad for p in parser.parameters()):
        raise ValueError("parser must be frozen before caching targets")
    digest = parser_digest(parser)
    pairs = list(zip(dataset.ids, dataset.images)) if isinstance(dataset, FaceDataset) else list(dataset)

    cached: dict[str, np.ndarray] = {}
    cache_file = Path(cache_dir) / "parsing_targets.npz" if cache_dir is not None else None
    if cache_file is not None and cache_file.exists():
        with np.load(cache_file) as archive:
            if str(archive["__digest__"]) == digest:
                cached = {k: archive[k] for k in archive.files if k != "__digest__"}

    labels: dict[str, np.ndarray] = {}
    recomputed = 0
    for image_id, img in pairs:
        if img is None:
            warnings.warn(f"image {image_id!r} missing, skipping parsing target", stacklevel=2)
            continue
        if image_id in cached:
            labels[image_id] = cached[image_id]
        else:
            labels[image_id] = parse_labels(parser_forward(parser, img))
            recomputed += 1
    if cache_file is not None and recomputed:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        np.savez(cache_file, __digest__=np.asarray(digest), **labels)
    return LabelStore(labels=labels, digest=digest, recomputed=recomputed)


@dataclass
class TrainState:
    """Mutable loop state; the parser never joins the trainable set."""

    model: CompletionModel
    opt_gen: torch.optim.Optimizer
    opt_local: torch.optim.Optimizer
    opt_global: torch.optim.Optimizer
    rng: np.random.Generator
    step: int = 0
    stage: int = 1
    d_local_accuracy: float = 0.5
    d_global_accuracy: float = 0.5
    history: list = field(default_factory=list)

    def trainable_parameters(self) -> set:
        out = set()
        for opt in (self.opt_gen, self.opt_local, self.opt_global):
            for group in opt.param_groups:
                out.update(id(p) for p in group["params"])
        return out


@dataclass
class TrainResult:
    model: CompletionModel
    checkpoints: list[Path]
    log_path: Path
    audit_path: Path
    history: list[LossReport]


def _to_tensor(stack: list[np.ndarray]) -> torch.Tensor:
    arr = np.stack([np.ascontiguousarray(x.transpose(2, 0, 1)) for x in stack])
    return torch.from_numpy(arr).float()


def _assemble_batch(dataset: FaceDataset, config: TrainConfig, rng: np.random.Generator, stage: int, store: LabelStore | None):
    """One training batch; consumes the rng identically at every stage."""
    size = config.image_size
    indices = rng.integers(0, len(dataset), size=config.batch_size)
    originals, inputs, windows, labels = [], [], [], []
    for i in indices:
        img = dataset.images[int(i)]
        params = None
        if config.augment is not None and config.augment.enabled:
            params = sample_augment_params(config.augment, rng)
            img = apply_augment(img, params)
        mask = sample_training_mask(rng, image_size=size, mask_size=config.mask_size)
        originals.append(img)
        inputs.append(fill_noise(img, mask, rng))
        windows.append(local_window(mask, config.local_crop, (size, size)))
        if stage >= 3:
            lbl = store.labels[dataset.ids[int(i)]]
            labels.append(apply_augment_labels(lbl, params) if params is not None else lbl)
    batch = {
        "originals": _to_tensor(originals),
        "inputs": _to_tensor(inputs),
        "windows": windows,
    }
    if stage >= 3:
        batch["labels"] = torch.from_numpy(np.stack(labels)).long()
    return batch


def _crop_batch(frames: torch.Tensor, windows, crop: int) -> torch.Tensor:
    return torch.stack([frames[i, :, wy : wy + crop, wx : wx + crop] for i, (wy, wx) in enumerate(windows)])


def _clamp_prob(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(PROB_EPS, 1.0 - PROB_EPS)


def _d_accuracy(d_real: torch.Tensor, d_fake: torch.Tensor) -> float:
    real_ok = (d_real > 0.5).float().mean().item()
    fake_ok = (d_fake < 0.5).float().mean().item()
    return (real_ok + fake_ok) / 2.0


def _discriminator_round(disc, opt, real: torch.Tensor, fake: torch.Tensor, accuracy: float, threshold: float):
    """Gated update; returns (new accuracy, updated flag)."""
    if should_update_discriminator(accuracy, threshold):
        d_real = _clamp_prob(disc(real))
        d_fake = _clamp_prob(disc(fake.detach()))
        loss = adversarial_d_loss(d_real, d_fake)
        opt.zero_grad()
        loss.backward()
        opt.step()
        updated = True
    else:
        with torch.no_grad():
            d_real = disc(real)
            d_fake = disc(fake)
        updated = False
    return _d_accuracy(d_real.detach(), d_fake.detach()), updated


def train_step(state: TrainState, batch: dict, config: TrainConfig) -> tuple[LossReport, dict]:
    """One optimization step at the current stage; returns (report, audit)."""
    model = state.model
    stage = state.stage
    crop = config.local_crop
    audit = {"step": state.step, "d_local_accuracy": None, "d_local_updated": False, "d_global_accuracy": None, "d_global_updated": False}

    generated = model.generator(batch["inputs"])
    l_r = reconstruction_loss(generated, batch["originals"])
    l_a1 = torch.zeros(())
    l_a2 = torch.zeros(())
    l_p = torch.zeros(())

    if stage >= 2:
        fake_crops = _crop_batch(generated, batch["windows"], crop)
        real_crops = _crop_batch(batch["originals"], batch["windows"], crop)
        state.d_local_accuracy, updated = _discriminator_round(
            model.local_disc, state.opt_local, real_crops, fake_crops, state.d_local_accuracy, config.d_accuracy_threshold
        )
        audit["d_local_accuracy"] = state.d_local_accuracy
        audit["d_local_updated"] = updated
        l_a1 = adversarial_g_loss(_clamp_prob(model.local_disc(fake_crops)))

    if stage >= 3:
        state.d_global_accuracy, updated = _discriminator_round(
            model.global_disc, state.opt_global, batch["originals"], generated, state.d_global_accuracy, config.d_accuracy_threshold
        )
        audit["d_global_accuracy"] = state.d_global_accuracy
        audit["d_global_updated"] = updated
        l_a2 = adversarial_g_loss(_clamp_prob(model.global_disc(generated)))
        l_p = parsing_loss(model.parser(generated), batch["labels"])

    total = total_loss(l_r, l_a1, l_a2, l_p, model.weights, stage)
    state.opt_gen.zero_grad()
    total.backward()
    state.opt_gen.step()

    report = LossReport.from_terms(l_r.item(), l_a1.item(), l_a2.item(), l_p.item(), model.weights, stage)
    return report, audit


def _stage_boundaries(schedule: CurriculumSchedule) -> set[int]:
    ends = set()
    if schedule.stage2_steps + schedule.stage3_steps > 0 and schedule.stage1_steps > 0:
        ends.add(schedule.stage1_steps)
    if schedule.stage3_steps > 0 and schedule.stage2_steps > 0:
        ends.add(schedule.stage1_steps + schedule.stage2_steps)
    return ends


def train(config: TrainConfig, dataset: FaceDataset, schedule: CurriculumSchedule | None = None, on_step=None) -> TrainResult:
    """Run the curriculum; returns the model, checkpoints, and log paths.

    `on_step(state, report)` may return True to stop gracefully (a final
    checkpoint is still written). A non-finite loss aborts with a
    diagnostic checkpoint.
    """
    schedule = schedule or config.schedule
    if dataset.image_size != config.image_size:
        raise ConfigurationError(f"dataset images are {dataset.image_size}px, config expects {config.image_size}px")
    torch.set_num_threads(1)  # multi-thread reductions would break byte determinism

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = build_model(*config.specs(), weights=config.weights, seed=config.seed, model_tag=config.model_tag)
    if config.parser_path is not None:
        if not Path(config.parser_path).exists():
            raise ConfigurationError(f"parser checkpoint not found: {config.parser_path}")
        model.parser = load_parser_checkpoint(config.parser_path)

    betas = (config.beta1, config.beta2)
    state = TrainState(
        model=model,
        opt_gen=torch.optim.Adam(model.generator.parameters(), lr=config.learning_rate, betas=betas),
        opt_local=torch.optim.Adam(model.local_disc.parameters(), lr=config.learning_rate, betas=betas),
        opt_global=torch.optim.Adam(model.global_disc.parameters(), lr=config.learning_rate, betas=betas),
        rng=np.random.default_rng(config.seed),
    )

    store = None
    if schedule.stage3_steps > 0:
        store = cache_parsing_targets(model.parser, dataset, cache_dir=out_dir / "parsing_cache")

    log_path = out_dir / "loss_log.jsonl"
    audit_path = out_dir / "audit_log.jsonl"
    boundaries = _stage_boundaries(schedule)
    checkpoints: list[Path] = []

    with open(log_path, "w") as log_file, open(audit_path, "w") as audit_file:
        for step in range(1, schedule.total_steps + 1):
            state.step = step
            state.stage = schedule.stage_at(step)
            model.stage, model.step = state.stage, step
            batch = _assemble_batch(dataset, config, state.rng, state.stage, store)
            report, audit = train_step(state, batch, config)
            state.history.append(report)
            log_file.write(json.dumps(report.to_record(step)) + "\n")
            audit_file.write(json.dumps(audit) + "\n")
            if not np.isfinite(report.total):
                path = save_checkpoint(model, out_dir / "ckpt_diagnostic")
                raise FloatingPointError(f"non-finite loss at step {step}; diagnostic checkpoint at {path}")
            if step in boundaries or step % config.checkpoint_every == 0:
                checkpoints.append(save_checkpoint(model, out_dir / f"ckpt_step{step:06d}"))
            if on_step is not None and on_step(state, report):
                break

    checkpoints.append(save_checkpoint(model, out_dir / "ckpt_final"))
    return TrainResult(model=model, checkpoints=checkpoints, log_path=log_path, audit_path=audit_path, history=state.history)


def masked_region_mse(model: CompletionModel, dataset: FaceDataset, mask_size: int, seed: int = 0) -> float:
    """Mean MSE inside fixed sampled masks after completion, over a dataset."""
    from .completion import CompletionRequest, complete

    rng = np.random.default_rng(seed)
    total = 0.0
    for i, img in enumerate(dataset.images):
        mask = sample_training_mask(rng, image_size=img.shape[0], mask_size=mask_size)
        out = complete(CompletionRequest(image=img, mask=mask, seed=seed + i, blend=False), model)
        diff = (out - img)[mask.bitmap]
        total += float(np.mean(diff**2))
    return total / len(dataset)


# ---------------------------------------------------------------------------
# checkpoints


def _spec_to_dict(spec) -> dict:
    out = dataclasses.asdict(spec)
    for key, value in out.items():
        if isinstance(value, tuple):
            out[key] = list(value)
    return out


def _atomic_write_dir(target: Path, write_fn) -> Path:
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=target.name + ".", dir=target.parent))
    try:
        write_fn(tmp)
        if target.exists():
            shutil.rmtree(target)
        tmp.replace(target)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return target


def save_checkpoint(model: CompletionModel, dir_path) -> Path:
    """Manifest plus per-network parameter blobs, written atomically."""
    target = Path(dir_path)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "model_tag": model.model_tag,
        "stage": model.stage,
        "step": model.step,
        "seed": model.seed,
        "weights": dataclasses.asdict(model.weights),
        "generator": _spec_to_dict(model.generator.spec),
        "local_disc": _spec_to_dict(model.local_disc.spec),
        "global_disc": _spec_to_dict(model.global_disc.spec),
        "parser": _spec_to_dict(model.parser.spec),
        "parser_digest": parser_digest(model.parser),
    }

    def write(tmp: Path):
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        torch.save(model.generator.state_dict(), tmp / "generator.pt")
        torch.save(model.local_disc.state_dict(), tmp / "local_disc.pt")
        torch.save(model.global_disc.state_dict(), tmp / "global_disc.pt")
        torch.save(model.parser.state_dict(), tmp / "parser.pt")

    return _atomic_write_dir(target, write)


def read_manifest(dir_path) -> dict:
    path = Path(dir_path) / "manifest.json"
    if not path.exists():
        raise CheckpointError(f"no manifest at {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt manifest at {path}: {e}") from e
    return manifest


def manifest_digest(dir_path) -> str:
    path = Path(dir_path) / "manifest.json"
    if not path.exists():
        raise CheckpointError(f"no manifest at {path}")
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_checkpoint(dir_path) -> CompletionModel:
    """Rebuild the networks from the manifest and load their parameters."""
    folder = Path(dir_path)
    manifest = read_manifest(folder)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format')!r}")
    try:
        gen_spec = GeneratorSpec(**{**manifest["generator"], "block_convs": tuple(manifest["generator"]["block_convs"])})
        local_spec = DiscriminatorSpec(**manifest["local_disc"])
        global_spec = DiscriminatorSpec(**manifest["global_disc"])
        parser_spec = ParserSpec(**{**manifest["parser"], "block_convs": tuple(manifest["parser"]["block_convs"])})
        model = build_model(
            gen_spec,
            local_spec,
            global_spec,
            parser_spec,
            weights=LossWeights(**manifest["weights"]),
            seed=manifest["seed"],
            model_tag=manifest["model_tag"],
        )
        model.generator.load_state_dict(torch.load(folder / "generator.pt", weights_only=True))
        model.local_disc.load_state_dict(torch.load(folder / "local_disc.pt", weights_only=True))
        model.global_disc.load_state_dict(torch.load(folder / "global_disc.pt", weights_only=True))
        model.parser.load_state_dict(torch.load(folder / "parser.pt", weights_only=True))
    except (KeyError, TypeError, ValueError, FileNotFoundError, RuntimeError) as e:
        raise CheckpointError(f"cannot load checkpoint {folder}: {e}") from e
    model.stage = manifest["stage"]
    model.step = manifest["step"]
    model.parser.freeze()
    return model


def save_parser_checkpoint(parser: Parser, dir_path) -> Path:
    target = Path(dir_path)
    manifest = {
        "format": PARSER_CHECKPOINT_FORMAT,
        "spec": _spec_to_dict(parser.spec),
        "digest": parser_digest(parser),
    }

    def write(tmp: Path):
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        torch.save(parser.state_dict(), tmp / "parser.pt")

    return _atomic_write_dir(target, write)


def load_parser_checkpoint(dir_path) -> Parser:
    folder = Path(dir_path)
    manifest = read_manifest(folder)
    if manifest.get("format") != PARSER_CHECKPOINT_FORMAT:
        raise CheckpointError(f"unsupported parser checkpoint format {manifest.get('format')!r}")
    try:
        spec = ParserSpec(**{**manifest["spec"], "block_convs": tuple(manifest["spec"]["block_convs"])})
        parser = Parser(spec)
        parser.load_state_dict(torch.load(folder / "parser.pt", weights_only=True))
    except (KeyError, TypeError, ValueError, FileNotFoundError, RuntimeError) as e:
        raise CheckpointError(f"cannot load parser checkpoint {folder}: {e}") from e
    return parser.freeze()


# ---------------------------------------------------------------------------
# parser training


@dataclass
class ParserTrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 8
    max_steps: int = 2000
    eval_every: int = 50
    patience: int = 5
    min_delta: float = 1e-3
    val_fraction: float = 0.2
    seed: int = 0
    image_size: int = 64
    base_channels: int = 16
    bottleneck_dim: int = 256


@dataclass
class ParserTrainResult:
    parser: Parser
    overall_f: float
    per_class_f: dict[int, float]
    history: list[tuple[int, float]]
    steps_run: int


def _validation_f(parser: Parser, pairs) -> tuple[float, dict[int, float]]:
    from .evaluation import label_f_scores

    preds = [parse_labels(parser_forward(parser, img)) for img, _ in pairs]
    truths = [lbl for _, lbl in pairs]
    per_class, overall = label_f_scores(np.stack(preds), np.stack(truths))
    return overall, per_class


def train_parser(pairs: list, config: ParserTrainConfig | None = None) -> ParserTrainResult:
    """Train the segmentation parser until the validation f-score plateaus.

    `pairs` is a list of (image, label-map) tuples; the tail becomes the
    validation split. Training stops after `patience` evaluations without
    improvement beyond `min_delta`, or at `max_steps`.
    """
    config = config or ParserTrainConfig()
    if not pairs:
        raise ValueError("parser training set is empty")
    for img, lbl in pairs:
        if lbl.shape != img.shape[:2]:
            raise ValueError(f"label map {lbl.shape} does not match image {img.shape[:2]}")
        if lbl.min() < 0 or lbl.max() >= 11:
            raise ValueError("labels must lie in 0..10")

    n_val = max(1, round(len(pairs) * config.val_fraction))
    train_pairs, val_pairs = pairs[:-n_val], pairs[-n_val:]
    if not train_pairs:
        raise ValueError("no training pairs left after validation split")

    torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    spec = ParserSpec(image_size=config.image_size, base_channels=config.base_channels, bottleneck_dim=config.bottleneck_dim)
    parser = Parser(spec)
    opt = torch.optim.Adam(parser.parameters(), lr=config.learning_rate, betas=(0.5, 0.999))
    rng = np.random.default_rng(config.seed)

    images = _to_tensor([img for img, _ in train_pairs])
    labels = torch.from_numpy(np.stack([lbl for _, lbl in train_pairs])).long()
    # small facial classes are outnumbered ~60:1 by background/skin; weight
    # the training loss by inverse-sqrt frequency so they are not ignored
    counts = np.bincount(labels.numpy().ravel(), minlength=11).astype(np.float64)
    class_weights = 1.0 / np.sqrt(np.maximum(counts, 1.0))
    class_weights /= class_weights.mean()
    weight = torch.from_numpy(class_weights).float()

    best = -1.0
    best_state = None
    stale = 0
    history: list[tuple[int, float]] = []
    step = 0
    for step in range(1, config.max_steps + 1):
        idx = torch.from_numpy(rng.integers(0, len(train_pairs), size=config.batch_size))
        parser.train()
        loss = F.cross_entropy(parser(images[idx]), labels[idx], weight=weight)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % config.eval_every == 0:
            overall, _ = _validation_f(parser, val_pairs)
            history.append((step, overall))
            if overall > best + config.min_delta:
                best = overall
                best_state = {k: v.clone() for k, v in parser.state_dict().items()}
                stale = 0
            else:
                stale += 1
            if stale >= config.patience:
                break

    if best_state is not None:
        parser.load_state_dict(best_state)
    overall, per_class = _validation_f(parser, val_pairs)
    history.append((step, overall))
    parser.freeze()
    return ParserTrainResult(parser=parser, overall_f=overall, per_class_f=per_class, history=history, steps_run=step)
