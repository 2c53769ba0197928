"""Network definitions: generator, local/global discriminators, face parser.

The generator is an autoencoder. Its encoder follows the VGG-19 stack from
the first convolution through the third pooling layer (blocks of 2, 2, 4
convolutions at widths c, 2c, 4c), then two 3x3 convolutions at width 8c,
a fourth pooling layer, and a fully-connected bottleneck. The decoder
mirrors the encoder, replacing each pooling layer with max-location
unpooling driven by switches recorded on the way down, and ends in a
sigmoid so outputs live in [0,1]. The parser reuses the same skeleton with
an 11-channel logit head and no squashing.

Both discriminators are strided-convolution stacks in the DCGAN style
(kernel 4, stride 2, batch normalization after all but the first layer,
leaky rectifier slope 0.2, terminal sigmoid scalar): the local one judges
a 64x64 crop around the mask, the global one the whole 128x128 frame.

All sizes are parametric so desk-scale variants (smaller frames, narrower
channels) run quickly on a CPU; the defaults are the canonical full-scale
values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .imaging import ensure_image
from .losses import LossWeights
from .masking import MaskSpec

NUM_PARSE_LABELS = 11
PARSE_LABEL_NAMES = (
    "background",
    "skin",
    "left_eyebrow",
    "right_eyebrow",
    "left_eye",
    "right_eye",
    "nose",
    "upper_lip",
    "inner_mouth",
    "lower_lip",
    "hair",
)


def _check_encoder_size(image_size: int) -> None:
    if image_size < 16 or image_size % 16 != 0:
        raise ValueError(f"image_size must be a positive multiple of 16, got {image_size}")


@dataclass(frozen=True)
class GeneratorSpec:
    """Declarative shape of the completion autoencoder."""

    image_size: int = 128
    in_channels: int = 3
    out_channels: int = 3
    base_channels: int = 64
    block_convs: tuple[int, int, int, int] = (2, 2, 4, 2)
    bottleneck_dim: int = 2048

    def __post_init__(self):
        _check_encoder_size(self.image_size)
        if self.bottleneck_dim <= 0:
            raise ValueError("bottleneck_dim must be positive")
        if len(self.block_convs) != 4 or any(n < 1 for n in self.block_convs):
            raise ValueError("block_convs must be four positive counts")

    @property
    def channels(self) -> tuple[int, int, int, int]:
        return tuple(self.base_channels * (1 << i) for i in range(4))

    @property
    def code_spatial(self) -> int:
        return self.image_size // 16

    def spatial_trace(self) -> list[int]:
        """Feature-map side length after the input and each pooling layer."""
        return [self.image_size >> k for k in range(5)]


@dataclass(frozen=True)
class DiscriminatorSpec:
    """Declarative shape of one real/fake classifier."""

    scope: str
    input_size: int = 0
    base_channels: int = 64
    n_layers: int = 0

    def __post_init__(self):
        if self.scope not in ("local", "global"):
            raise ValueError(f"scope must be 'local' or 'global', got {self.scope!r}")
        if self.input_size == 0:
            object.__setattr__(self, "input_size", 64 if self.scope == "local" else 128)
        size = self.input_size
        if size < 8 or (size & (size - 1)) != 0:
            raise ValueError(f"input_size must be a power of two >= 8, got {size}")
        if self.n_layers == 0:
            object.__setattr__(self, "n_layers", int(math.log2(size)) - 2)
        if not 1 <= self.n_layers < int(math.log2(size)):
            raise ValueError(f"n_layers {self.n_layers} out of range for input_size {size}")

    @property
    def final_spatial(self) -> int:
        return self.input_size >> self.n_layers


@dataclass(frozen=True)
class ParserSpec:
    """Declarative shape of the semantic parsing network."""

    image_size: int = 128
    base_channels: int = 64
    block_convs: tuple[int, int, int, int] = (2, 2, 4, 2)
    bottleneck_dim: int = 2048
    num_labels: int = NUM_PARSE_LABELS
    frozen: bool = True

    def __post_init__(self):
        _check_encoder_size(self.image_size)
        if self.num_labels < 2:
            raise ValueError("num_labels must be at least 2")

    def core_spec(self) -> GeneratorSpec:
        return GeneratorSpec(
            image_size=self.image_size,
            in_channels=3,
            out_channels=self.num_labels,
            base_channels=self.base_channels,
            block_convs=self.block_convs,
            bottleneck_dim=self.bottleneck_dim,
        )


class _EncoderDecoder(nn.Module):
    """Symmetric conv stack with switch-driven unpooling and an FC code."""

    def __init__(self, spec: GeneratorSpec, sigmoid_head: bool):
        super().__init__()
        self.spec = spec
        self.sigmoid_head = sigmoid_head
        ch = spec.channels
        self.encoder_blocks = nn.ModuleList()
        prev = spec.in_channels
        for i, n_convs in enumerate(spec.block_convs):
            block = nn.ModuleList()
            for _ in range(n_convs):
                block.append(nn.Conv2d(prev, ch[i], kernel_size=3, padding=1))
                prev = ch[i]
            self.encoder_blocks.append(block)
        self.pool = nn.MaxPool2d(2, stride=2, return_indices=True)
        self.unpool = nn.MaxUnpool2d(2, stride=2)
        code_elems = ch[3] * spec.code_spatial**2
        self.fc_in = nn.Linear(code_elems, spec.bottleneck_dim)
        self.fc_out = nn.Linear(spec.bottleneck_dim, code_elems)
        self.decoder_blocks = nn.ModuleList()
        for i in reversed(range(4)):
            block = nn.ModuleList()
            narrow_to = ch[i - 1] if i > 0 else spec.out_channels
            for j in range(spec.block_convs[i]):
                last = j == spec.block_convs[i] - 1
                block.append(nn.Conv2d(ch[i], narrow_to if last else ch[i], kernel_size=3, padding=1))
            self.decoder_blocks.append(block)
        self.apply(_init_conv_orthogonal)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels or x.shape[2] != x.shape[3] or x.shape[2] != self.spec.image_size:
            raise ValueError(
                f"expected (N, {self.spec.in_channels}, {self.spec.image_size}, {self.spec.image_size}), got {tuple(x.shape)}"
            )
        switches, pre_pool_sizes = [], []
        for block in self.encoder_blocks:
            for conv in block:
                x = F.relu(conv(x))
            pre_pool_sizes.append(x.shape)
            x, idx = self.pool(x)
            switches.append(idx)
        code_shape = x.shape
        x = F.relu(self.fc_in(x.flatten(1)))
        x = F.relu(self.fc_out(x)).view(code_shape)
        for k, block in enumerate(self.decoder_blocks):
            i = 3 - k
            x = self.unpool(x, switches[i], output_size=pre_pool_sizes[i][2:])
            for j, conv in enumerate(block):
                x = conv(x)
                terminal = k == 3 and j == len(block) - 1
                if terminal:
                    x = torch.sigmoid(x) if self.sigmoid_head else x
                else:
                    x = F.relu(x)
        return x


def _init_conv_orthogonal(module: nn.Module) -> None:
    if isinstance(module, (nn.Conv2d, nn.Linear)):
        nn.init.orthogonal_(module.weight)
        nn.init.zeros_(module.bias)


def _init_dcgan(module: nn.Module) -> None:
    if isinstance(module, nn.Conv2d):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


class Generator(nn.Module):
    """Noise-filled frame in, completed frame in [0,1] out."""

    def __init__(self, spec: GeneratorSpec | None = None):
        super().__init__()
        self.spec = spec or GeneratorSpec()
        self.core = _EncoderDecoder(self.spec, sigmoid_head=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.core(x)

    def load_encoder_weights(self, state_dict: dict) -> int:
        """Copy matching pretrained conv weights into the encoder.

        Accepts a flat state dict of conv weights/biases in layer order (the
        torchvision VGG-19 features layout). Only tensors whose shapes match
        are copied, so narrow desk-scale encoders skip cleanly. Returns the
        number of tensors copied.
        """
        own = [m for block in self.core.encoder_blocks for m in block]
        incoming_w = [v for k, v in state_dict.items() if k.endswith("weight") and v.ndim == 4]
        incoming_b = [v for k, v in state_dict.items() if k.endswith("bias") and v.ndim == 1]
        copied = 0
        for conv, w, b in zip(own, incoming_w, incoming_b):
            if tuple(conv.weight.shape) == tuple(w.shape):
                with torch.no_grad():
                    conv.weight.copy_(w)
                    conv.bias.copy_(b)
                copied += 2
        return copied


class Parser(nn.Module):
    """Frame in, per-pixel label logits out (channels second)."""

    def __init__(self, spec: ParserSpec | None = None):
        super().__init__()
        self.spec = spec or ParserSpec()
        self.core = _EncoderDecoder(self.spec.core_spec(), sigmoid_head=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.core(x)

    def freeze(self) -> "Parser":
        self.requires_grad_(False)
        self.eval()
        return self


class Discriminator(nn.Module):
    """Image in, probability of being a real photograph out."""

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        layers: list[nn.Module] = []
        prev = 3
        ch = spec.base_channels
        for i in range(spec.n_layers):
            layers.append(nn.Conv2d(prev, ch, kernel_size=4, stride=2, padding=1))
            if i > 0:
                layers.append(nn.BatchNorm2d(ch))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            prev, ch = ch, ch * 2
        layers.append(nn.Conv2d(prev, 1, kernel_size=spec.final_spatial, stride=1, padding=0))
        layers.append(nn.Sigmoid())
        self.stack = nn.Sequential(*layers)
        self.apply(_init_dcgan)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        size = self.spec.input_size
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != size or x.shape[3] != size:
            raise ValueError(f"{self.spec.scope} discriminator expects (N, 3, {size}, {size}), got {tuple(x.shape)}")
        return self.stack(x).view(-1)


@dataclass
class CompletionModel:
    """All four networks plus the metadata a checkpoint carries."""

    generator: Generator
    local_disc: Discriminator
    global_disc: Discriminator
    parser: Parser
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    stage: int = 1
    step: int = 0
    model_tag: str = "completion"

    @property
    def image_size(self) -> int:
        return self.generator.spec.image_size

    @property
    def local_crop(self) -> int:
        return self.local_disc.spec.input_size


def build_model(
    gen_spec: GeneratorSpec,
    local_spec: DiscriminatorSpec,
    global_spec: DiscriminatorSpec,
    parser_spec: ParserSpec,
    weights: LossWeights | None = None,
    seed: int = 0,
    model_tag: str = "completion",
) -> CompletionModel:
    """Construct all networks from one seed so rebuilds are reproducible."""
    if local_spec.scope != "local" or global_spec.scope != "global":
        raise ValueError("discriminator specs must be one local and one global")
    if global_spec.input_size != gen_spec.image_size:
        raise ValueError("global discriminator input_size must equal the generator image_size")
    torch.manual_seed(seed)
    model = CompletionModel(
        generator=Generator(gen_spec),
        local_disc=Discriminator(local_spec),
        global_disc=Discriminator(global_spec),
        parser=Parser(parser_spec).freeze(),
        weights=weights or LossWeights(),
        seed=seed,
        model_tag=model_tag,
    )
    return model


def desk_specs(image_size: int = 64, base_channels: int = 12, bottleneck_dim: int = 256):
    """Small CPU-friendly specs: half-size local crop, narrow channels."""
    gen = GeneratorSpec(image_size=image_size, base_channels=base_channels, bottleneck_dim=bottleneck_dim)
    local = DiscriminatorSpec(scope="local", input_size=image_size // 2, base_channels=base_channels)
    glob = DiscriminatorSpec(scope="global", input_size=image_size, base_channels=base_channels)
    parser = ParserSpec(image_size=image_size, base_channels=base_channels, bottleneck_dim=bottleneck_dim)
    return gen, local, glob, parser


def _to_batch(img: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).float().unsqueeze(0)


def _from_batch(t: torch.Tensor) -> np.ndarray:
    return t.squeeze(0).permute(1, 2, 0).numpy().astype(np.float64)


def generator_forward(generator: Generator, network_input: np.ndarray) -> np.ndarray:
    """Single-image inference pass; deterministic given params and input."""
    ensure_image(network_input, "network_input")
    size = generator.spec.image_size
    if network_input.shape[:2] != (size, size):
        raise ValueError(f"generator expects {size}x{size} input, got {network_input.shape[:2]}")
    generator.eval()
    with torch.no_grad():
        out = generator(_to_batch(network_input))
    return np.clip(_from_batch(out), 0.0, 1.0)


def discriminator_forward(disc: Discriminator, img: np.ndarray, scope: str | None = None) -> float:
    """Single-image probability that the crop/frame is real."""
    ensure_image(img, "img")
    if scope is not None and scope != disc.spec.scope:
        raise ValueError(f"discriminator has scope {disc.spec.scope!r}, called with {scope!r}")
    size = disc.spec.input_size
    if img.shape[:2] != (size, size):
        raise ValueError(f"{disc.spec.scope} discriminator expects {size}x{size} input, got {img.shape[:2]}")
    disc.eval()
    with torch.no_grad():
        prob = disc(_to_batch(img))
    return float(prob.item())


def parser_forward(parser: Parser, img: np.ndarray) -> np.ndarray:
    """Per-pixel label logits, channels last (H, W, num_labels)."""
    ensure_image(img, "img")
    size = parser.spec.image_size
    if img.shape[:2] != (size, size):
        raise ValueError(f"parser expects {size}x{size} input, got {img.shape[:2]}")
    parser.eval()
    with torch.no_grad():
        logits = parser(_to_batch(img))
    out = _from_batch(logits)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("parser produced non-finite logits")
    return out


def parse_labels(logits: np.ndarray) -> np.ndarray:
    """Per-pixel argmax over the label axis; ties go to the smaller index."""
    logits = np.asarray(logits)
    if logits.ndim != 3:
        raise ValueError(f"logits must be (H, W, num_labels), got shape {logits.shape}")
    return np.argmax(logits, axis=-1).astype(np.int64)


def local_window(mask: MaskSpec, crop_size: int, image_shape: tuple[int, int]) -> tuple[int, int]:
    """Top-left corner of the crop the local discriminator judges.

    The window is centered on the mask bounding-box center (per axis:
    bbox start + extent // 2) and clamped to stay inside the image.
    """
    if mask.is_empty:
        raise ValueError("cannot place a local window on an empty mask")
    h, w = image_shape
    if crop_size > h or crop_size > w:
        raise ValueError(f"crop_size {crop_size} exceeds image {image_shape}")
    top, left, bh, bw = mask.bbox
    cy, cx = top + bh // 2, left + bw // 2
    wy = min(max(cy - crop_size // 2, 0), h - crop_size)
    wx = min(max(cx - crop_size // 2, 0), w - crop_size)
    return wy, wx


def crop_local(img: np.ndarray, mask: MaskSpec, crop_size: int = 64) -> np.ndarray:
    """The crop centered on the mask that the local discriminator sees."""
    ensure_image(img, "img")
    wy, wx = local_window(mask, crop_size, img.shape[:2])
    return img[wy : wy + crop_size, wx : wx + crop_size, :]


def generator_trace(spec: GeneratorSpec) -> list[tuple]:
    """Expected layer-by-layer record computed from the GeneratorSpec fields.

    Entries: ("conv", in_ch, out_ch), ("pool", side_after), ("fc", n_in,
    n_out), ("unpool", side_after). Used to audit a built network.
    """
    ch = spec.channels
    trace: list[tuple] = []
    side = spec.image_size
    prev = spec.in_channels
    for i, n_convs in enumerate(spec.block_convs):
        for _ in range(n_convs):
            trace.append(("conv", prev, ch[i]))
            prev = ch[i]
        side //= 2
        trace.append(("pool", side))
    code = ch[3] * spec.code_spatial**2
    trace.append(("fc", code, spec.bottleneck_dim))
    trace.append(("fc", spec.bottleneck_dim, code))
    for i in reversed(range(4)):
        side *= 2
        trace.append(("unpool", side))
        narrow_to = ch[i - 1] if i > 0 else spec.out_channels
        for j in range(spec.block_convs[i]):
            last = j == spec.block_convs[i] - 1
            trace.append(("conv", ch[i], narrow_to if last else ch[i]))
    return trace


def audit_network(core: _EncoderDecoder) -> list[tuple]:
    """Actual layer record read back from a built encoder-decoder."""
    spec = core.spec
    trace: list[tuple] = []
    side = spec.image_size
    for block in core.encoder_blocks:
        for conv in block:
            trace.append(("conv", conv.in_channels, conv.out_channels))
        side //= 2
        trace.append(("pool", side))
    trace.append(("fc", core.fc_in.in_features, core.fc_in.out_features))
    trace.append(("fc", core.fc_out.in_features, core.fc_out.out_features))
    for block in core.decoder_blocks:
        side *= 2
        trace.append(("unpool", side))
        for conv in block:
            trace.append(("conv", conv.in_channels, conv.out_channels))
    return trace


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


LABEL_COLORS = (
    np.array(
        [
            [0, 0, 0],  # background
            [224, 172, 138],  # skin
            [90, 60, 20],  # left eyebrow
            [140, 95, 35],  # right eyebrow
            [40, 90, 200],  # left eye
            [70, 160, 220],  # right eye
            [240, 140, 80],  # nose
            [200, 40, 60],  # upper lip
            [120, 10, 30],  # inner mouth
            [235, 100, 140],  # lower lip
            [120, 60, 160],  # hair
        ],
        dtype=np.float64,
    )
    / 255.0
)


def colorize_labels(labels: np.ndarray) -> np.ndarray:
    """Color-coded visualization of a label map as an image tensor."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"labels must be (H, W), got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= len(LABEL_COLORS)):
        raise ValueError(f"labels must lie in 0..{len(LABEL_COLORS) - 1}")
    return LABEL_COLORS[labels]
