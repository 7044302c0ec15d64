"""Command-line interface: train, stylize, compare, metrics, filter.

Exit codes: 0 success, 2 config/argument error, 3 dataset error,
4 numeric failure, 5 I/O or decode error. Diagnostics go to stderr;
stdout carries machine-parseable results only.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import (
    ArgumentError,
    ConfigError,
    DatasetError,
    DecodeError,
    IoError,
    NotFoundError,
    NumericError,
    VersionError,
)
from .guided import GuidedFilterParams, smooth
from .image import load_image, save_image
from .inputs import NoiseSpec, sample_noise, split_seed
from .model import forward_dual, load_checkpoint
from .train import evaluate_texture_differentiation, load_config, scan_dataset, train

EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

SEPARATOR_PX = 2
SEPARATOR_GRAY = 0.5


def _load_net(path):
    net, _, _ = load_checkpoint(path)
    return net


def _prepare_input(img, mode: str, sigma: float, seed: int,
                   params: GuidedFilterParams | None):
    if mode == "raw":
        return img
    base = smooth(img, params)
    if mode == "smooth":
        return base
    if mode == "smooth_noise":
        h, w, c = base.shape
        noise = sample_noise(h, w, c, NoiseSpec(sigma=sigma),
                             seed=int(split_seed(seed, 4).integers(0, 2 ** 62)))
        return base + noise
    raise ArgumentError(f"unknown input mode {mode!r}")


def cmd_train(args) -> int:
    overrides = {}
    for key in ("seed", "total_steps", "learning_rate", "content_dir",
                "style_image", "out_dir"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    config = load_config(args.config, overrides)
    ckpt, _ = train(config, resume_from=args.resume)
    print(ckpt)
    return 0


def cmd_stylize(args) -> int:
    net = _load_net(args.checkpoint)
    img = load_image(args.content)
    params = GuidedFilterParams(radius=args.radius, eps=args.eps)
    x = _prepare_input(img, args.input_mode, args.sigma, args.seed, params)
    color, texture = forward_dual(net, x)
    out = color if args.branch == "color" else texture
    save_image(np.clip(out, 0.0, 1.0), args.out)
    print(args.out)
    return 0


def cmd_compare(args) -> int:
    """Write [content | texture(raw) | color(smooth) | color(smooth+noise)]."""
    net = _load_net(args.checkpoint)
    img = load_image(args.content)
    params = GuidedFilterParams(radius=args.radius, eps=args.eps)
    base = smooth(img, params)
    noise = sample_noise(*base.shape, NoiseSpec(sigma=args.sigma),
                         seed=int(split_seed(args.seed, 4).integers(0, 2 ** 62)))
    _, texture_raw = forward_dual(net, img)
    color_smooth, _ = forward_dual(net, base)
    color_noise, _ = forward_dual(net, base + noise)
    panels = [img, texture_raw, color_smooth, color_noise]
    h, w = img.shape[:2]
    sep = np.full((h, SEPARATOR_PX, 3), SEPARATOR_GRAY)
    strips = []
    for i, p in enumerate(panels):
        if i:
            strips.append(sep)
        strips.append(np.clip(p, 0.0, 1.0))
    save_image(np.concatenate(strips, axis=1), args.out)
    print(args.out)
    return 0


def cmd_metrics(args) -> int:
    eval_paths = scan_dataset(args.eval_dir)
    params = GuidedFilterParams(radius=args.radius, eps=args.eps)
    report = evaluate_texture_differentiation(
        args.checkpoint, eval_paths, params,
        NoiseSpec(sigma=args.sigma), seed=args.seed)
    payload = {
        "per_image": [
            {"id": name, "tv_smooth": a, "tv_noise": b}
            for name, a, b in report.per_image
        ],
        "mean_smooth": report.mean_smooth,
        "mean_noise": report.mean_noise,
        "ratio": report.ratio,
    }
    with open(args.out, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    print(f"{report.ratio:.6f}")
    return 0


def cmd_filter(args) -> int:
    img = load_image(args.input)
    params = GuidedFilterParams(radius=args.radius, eps=args.eps)
    save_image(smooth(img, params), args.out)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualstyle",
        description="Dual-branch color/texture style transfer with "
                    "distribution-differentiated training.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_filter_flags(p):
        p.add_argument("--radius", type=int, default=2)
        p.add_argument("--eps", type=float, default=1e-2)

    p = sub.add_parser("train", help="train a per-style model from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--total-steps", dest="total_steps", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--content-dir", dest="content_dir")
    p.add_argument("--style-image", dest="style_image")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--resume")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("stylize", help="stylize one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--content", required=True)
    p.add_argument("--branch", choices=("color", "texture"), default="color")
    p.add_argument("--input-mode", dest="input_mode",
                   choices=("smooth", "raw", "smooth_noise"), default="smooth")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    add_filter_flags(p)
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("compare", help="write a 4-panel comparison grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--content", required=True)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    add_filter_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("metrics", help="texture-differentiation TV report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--eval-dir", dest="eval_dir", required=True)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    add_filter_flags(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("filter", help="standalone edge-preserving smoothing")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    add_filter_flags(p)
    p.set_defaults(func=cmd_filter)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NotFoundError, DecodeError, VersionError, IoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
