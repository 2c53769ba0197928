"""Command line entry points: train, evaluate, complete, parse, serve.

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or missing
dataset, 3 incompatible checkpoint. The checkpoint argument falls back to
the FACEFILL_CHECKPOINT environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .completion import CompletionRequest, complete
from .data import load_image_folder
from .evaluation import (
    RandomConvEmbedder,
    eval_table_csv,
    evaluate_masks,
    identity_completer,
    make_recognition_split,
    mask_size_sweep,
    model_completer,
    noise_completer,
    recognition_csv,
    recognition_experiment,
    sweep_csv,
)
from .imaging import encode_png, load_image, resize_bilinear
from .masking import load_user_mask
from .networks import colorize_labels, parse_labels, parser_forward
from .synthetic import make_identity_dataset
from .training import (
    CheckpointError,
    ConfigurationError,
    load_checkpoint,
    load_parser_checkpoint,
    read_manifest,
    train,
    train_config_from_dict,
)

CHECKPOINT_ENV = "FACEFILL_CHECKPOINT"


def _resolve_checkpoint(arg: str | None) -> str:
    path = arg or os.environ.get(CHECKPOINT_ENV)
    if not path:
        raise ConfigurationError(f"no checkpoint given; pass --checkpoint or set {CHECKPOINT_ENV}")
    return path


def _random_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1)[0])


def _load_yaml(path: str) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigurationError(f"cannot parse config {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must be a mapping")
    return raw


def cmd_train(args) -> int:
    raw = _load_yaml(args.config)
    dataset_path = (raw.get("dataset") or {}).get("path")
    if not dataset_path or not Path(dataset_path).is_dir():
        print(f"error: dataset not found: {dataset_path}", file=sys.stderr)
        return 2
    config = train_config_from_dict(raw.get("training") or {})
    dataset = load_image_folder(dataset_path)
    result = train(config, dataset)
    print(f"trained {config.schedule.total_steps} steps; loss log at {result.log_path}")
    for ckpt in result.checkpoints:
        print(f"checkpoint: {ckpt}")
    return 0


def cmd_evaluate(args) -> int:
    raw = _load_yaml(args.config) if args.config else {}
    dataset_path = (raw.get("dataset") or {}).get("path") or args.dataset
    if not dataset_path or not Path(dataset_path).is_dir():
        print(f"error: dataset not found: {dataset_path}", file=sys.stderr)
        return 2
    eval_cfg = raw.get("evaluation") or {}
    seed = int(eval_cfg.get("seed", args.seed))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    dataset = load_image_folder(dataset_path)
    completers = {}
    model = None
    if not args.identity_model:
        model = load_checkpoint(_resolve_checkpoint(args.checkpoint))
        completers[model.model_tag] = model_completer(model)
        completers[model.model_tag + "+blend"] = model_completer(model, blend=True)
    else:
        completers["identity"] = identity_completer
    if args.baselines:
        completers.setdefault("identity", identity_completer)
        completers["noise"] = noise_completer

    images = dataset.images
    if model is not None and dataset.image_size != model.image_size:
        print(f"note: resizing dataset from {dataset.image_size}px to {model.image_size}px")
        images = [resize_bilinear(img, model.image_size, model.image_size) for img in images]

    embedder = RandomConvEmbedder(seed=seed)
    rows = evaluate_masks(completers, images, embedder=embedder, seed=seed)
    for metric, filename in (("SSIM", "ssim.csv"), ("PSNR", "psnr.csv"), ("identity", "identity.csv")):
        (out_dir / filename).write_text(eval_table_csv(rows, metric))
        print(f"wrote {out_dir / filename}")
    if args.sweep:
        sweep_rows = mask_size_sweep(completers, images, embedder=embedder, seed=seed)
        (out_dir / "sweep.csv").write_text(sweep_csv(sweep_rows))
        print(f"wrote {out_dir / 'sweep.csv'}")
    if args.recognition_identities:
        size = model.image_size if model is not None else dataset.image_size
        by_identity = make_identity_dataset(args.recognition_identities, 4, size=size, seed=seed)
        split = make_recognition_split(by_identity, seed=seed)
        variants: dict = {"original": None, "noise": noise_completer}
        if model is not None:
            variants[model.model_tag] = model_completer(model)
        rec_rows = recognition_experiment(variants, split, embedder=embedder, seed=seed)
        (out_dir / "recognition.csv").write_text(recognition_csv(rec_rows))
        print(f"wrote {out_dir / 'recognition.csv'}")
    return 0


def cmd_complete(args) -> int:
    model = load_checkpoint(_resolve_checkpoint(args.checkpoint))
    image = load_image(args.image)
    mask = load_user_mask(args.mask)
    seed = args.seed if args.seed is not None else _random_seed()
    request = CompletionRequest(image=image, mask=mask, seed=seed, blend=args.blend)
    result = complete(request, model)
    Path(args.out).write_bytes(encode_png(result))
    print(f"wrote {args.out} (seed {seed})")
    return 0


def cmd_parse(args) -> int:
    path = _resolve_checkpoint(args.checkpoint)
    manifest = read_manifest(path)
    if manifest.get("format") == "facefill-parser-v1":
        parser = load_parser_checkpoint(path)
    else:
        parser = load_checkpoint(path).parser
    image = load_image(args.image)
    labels = parse_labels(parser_forward(parser, image))
    Path(args.out).write_bytes(encode_png(colorize_labels(labels)))
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(_resolve_checkpoint(args.checkpoint))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facefill", description="Face completion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the three-stage curriculum from a config file")
    p.add_argument("--config", required=True, help="YAML run config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="benchmark a checkpoint on the O1-O6 masks")
    p.add_argument("--config", help="YAML config with dataset/evaluation sections")
    p.add_argument("--dataset", help="image folder (overrides config)")
    p.add_argument("--checkpoint", help=f"checkpoint directory (default ${CHECKPOINT_ENV})")
    p.add_argument("--out-dir", required=True, help="directory for result tables")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--identity-model", action="store_true", help="score the perfect-completion oracle instead of a checkpoint")
    p.add_argument("--baselines", action="store_true", help="add identity and noise-fill columns")
    p.add_argument("--sweep", action="store_true", help="also run the 16..80 mask-size sweep")
    p.add_argument("--recognition-identities", type=int, default=0, help="run recognition on N synthetic identities")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("complete", help="fill the masked region of one image")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True, help="single-channel 8-bit PNG, 255 = missing")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--blend", action="store_true", help="Poisson-blend the filled region")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help=f"checkpoint directory (default ${CHECKPOINT_ENV})")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("parse", help="write the color-coded label map of an image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help=f"checkpoint directory (default ${CHECKPOINT_ENV})")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("serve", help="run the HTTP completion service")
    p.add_argument("--checkpoint", help=f"checkpoint directory (default ${CHECKPOINT_ENV})")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ValueError, OSError, FloatingPointError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
