"""Command-line entry point binding the modules into reproducible workflows.

Subcommands: ``palette``, ``train``, ``colourise``, ``evaluate``,
``gallery``, ``inspect``.  Settings resolve as defaults < ``--config``
file (UTF-8 ``key=value`` lines, ``#`` comments) < command-line flags, and
the resolved effective configuration is printed before any work begins.

Exit codes: 0 success, 1 usage error, 2 runtime/IO error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import checkpoint as ckpt_io
from .gamut import GAMUT_MARGIN_DEFAULT, GRID_SIZE_DEFAULT, build_palette, save_palette_csv
from .losses import LossWeights
from .training import (
    TrainConfig,
    fit,
    generator_from_checkpoint,
    load_manifest,
)

CONFIG_KEYS = {
    "seed": int,
    "variant": str,
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "deterministic": lambda v: v.lower() in ("1", "true", "yes"),
    "encode_mode": str,
    "soft_k": int,
    "soft_sigma": float,
    "decode_method": str,
    "decode_temperature": float,
    "input_side": int,
    "base_channels": int,
    "dropout_p": float,
    "grid_size": float,
    "gamut_margin": float,
    "checkpoint_every": int,
    "w_gan": float,
    "w_l1": float,
    "w_cl": float,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def parse_config_file(path):
    """Read a ``key=value`` overlay file; unknown keys are usage errors."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                valid = ", ".join(sorted(CONFIG_KEYS))
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}; valid keys: {valid}")
            values[key] = CONFIG_KEYS[key](value.strip())
    return values


def resolve_train_config(args):
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    values = {}
    if args.config:
        values.update(parse_config_file(args.config))
    for key, flag in (
        ("seed", "seed"),
        ("variant", "variant"),
        ("epochs", "epochs"),
        ("batch_size", "batch"),
        ("learning_rate", "lr"),
        ("grid_size", "grid"),
    ):
        flag_value = getattr(args, flag, None)
        if flag_value is not None:
            values[key] = flag_value
    if getattr(args, "deterministic", False):
        values["deterministic"] = True
    weights = LossWeights(
        w_gan=values.pop("w_gan", 1.0),
        w_l1=values.pop("w_l1", 1.0),
        w_cl=values.pop("w_cl", 1.0),
    )
    return TrainConfig(weights=weights, **values)


def _print_config(cfg, extra=None):
    print("effective config:")
    if cfg is not None:
        for name in sorted(cfg.__dataclass_fields__):
            print(f"  {name}={getattr(cfg, name)}")
    for key, value in sorted((extra or {}).items()):
        print(f"  {key}={value}")


def _build_parser():
    parser = _Parser(prog="ucaps", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("palette", help="build the in-gamut bin palette and export it as CSV")
    p.add_argument("--grid", type=float, default=GRID_SIZE_DEFAULT)
    p.add_argument("--margin", type=float, default=GAMUT_MARGIN_DEFAULT)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit a model from a manifest of images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config")
    p.add_argument("--ckpt", help="resume from this checkpoint")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=("q", "q_gan", "ab_gan"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--grid", type=float)
    p.add_argument("--deterministic", action="store_true")

    p = sub.add_parser("colourise", help="colourise an image or a folder of images")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")

    p = sub.add_parser("evaluate", help="write a PSNR report CSV for a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")

    p = sub.add_parser("gallery", help="render a grayscale/prediction/truth comparison grid")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--config")

    p = sub.add_parser("inspect", help="print a checkpoint's header and shape table")
    p.add_argument("--ckpt", required=True)
    return parser


def _apply_eval_overrides(cfg, args):
    """Overlay decode settings from a config file onto a checkpoint's recipe."""
    overrides = parse_config_file(args.config) if args.config else {}
    fields = {k: v for k, v in overrides.items() if k in ("decode_method", "decode_temperature")}
    if fields:
        from dataclasses import replace

        cfg = replace(cfg, **fields)
    return cfg


def _cmd_palette(args):
    print("effective config:")
    print(f"  grid_size={args.grid}\n  margin={args.margin}\n  out={args.out}")
    palette = build_palette(args.grid, args.margin)
    save_palette_csv(palette, args.out)
    print(f"palette: {palette.q} bins -> {args.out}")
    return 0


def _cmd_train(args):
    has_overrides = bool(args.config) or args.deterministic or any(
        getattr(args, name) is not None
        for name in ("seed", "variant", "epochs", "batch", "lr", "grid")
    )
    if args.ckpt and not has_overrides:
        cfg = None  # continue under the checkpoint's stored recipe
        extra = {"recipe": f"from checkpoint {args.ckpt}"}
    else:
        cfg = resolve_train_config(args)
        extra = {}
    extra.update({"manifest": args.manifest, "out": args.out, "resume": args.ckpt})
    _print_config(cfg, extra)
    manifest = load_manifest(args.manifest)
    ckpt_path, metrics_path = fit(manifest, cfg, args.out, resume_from=args.ckpt)
    print(f"checkpoint -> {ckpt_path}")
    print(f"metrics -> {metrics_path}")
    return 0


def _cmd_colourise(args):
    from .colourspace import load_rgb, rgb_to_lab, save_rgb
    from .evaluation import predict_ab, reconstruct_rgb

    generator, cfg, _ = generator_from_checkpoint(args.ckpt)
    cfg = _apply_eval_overrides(cfg, args)
    _print_config(cfg, {"ckpt": args.ckpt, "in": args.input, "out": args.out})
    palette = build_palette(cfg.grid_size, cfg.gamut_margin)
    src = Path(args.input)
    folder_mode = src.is_dir()
    jobs = sorted(p for p in src.iterdir() if p.is_file()) if folder_mode else [src]
    out = Path(args.out)
    if folder_mode:
        out.mkdir(parents=True, exist_ok=True)
    produced = 0
    for job in jobs:
        try:
            rgb = load_rgb(job)
        except (OSError, ValueError) as exc:
            if not folder_mode:
                raise
            print(f"skipping {job}: {exc}", file=sys.stderr)
            continue
        pred_ab, _, _ = predict_ab(generator, palette, rgb, cfg)
        # Recolour at the original resolution: original L, upsampled ab.
        lab = rgb_to_lab(rgb)
        coloured = reconstruct_rgb(lab[..., 0], pred_ab)
        target = out / f"{job.stem}_colour.png" if folder_mode else out
        save_rgb(target, coloured)
        produced += 1
        print(f"{job} -> {target}")
    if not produced:
        raise ValueError(f"no images could be read from {src}")
    return 0


def _cmd_evaluate(args):
    from .evaluation import evaluate, write_report

    generator, cfg, _ = generator_from_checkpoint(args.ckpt)
    cfg = _apply_eval_overrides(cfg, args)
    _print_config(cfg, {"ckpt": args.ckpt, "manifest": args.manifest, "out": args.out})
    palette = build_palette(cfg.grid_size, cfg.gamut_margin)
    manifest = load_manifest(args.manifest, split="eval")
    report = evaluate(generator, palette, manifest, cfg)
    write_report(report, args.out)
    mean = f"{report.mean:.4f}" if report.rows else "undefined"
    print(f"evaluated {len(report.rows)} images, mean PSNR {mean} dB -> {args.out}")
    return 0


def _cmd_gallery(args):
    from .evaluation import emit_gallery, gallery_triples

    generator, cfg, _ = generator_from_checkpoint(args.ckpt)
    cfg = _apply_eval_overrides(cfg, args)
    _print_config(cfg, {"ckpt": args.ckpt, "manifest": args.manifest, "out": args.out})
    palette = build_palette(cfg.grid_size, cfg.gamut_margin)
    manifest = load_manifest(args.manifest, split="eval")
    triples = gallery_triples(generator, palette, manifest, cfg, limit=args.limit)
    emit_gallery(triples, args.out, tile_side=cfg.input_side)
    print(f"gallery with {len(triples)} rows -> {args.out}")
    return 0


def _cmd_inspect(args):
    print(f"effective config:\n  ckpt={args.ckpt}")
    ckpt = ckpt_io.read_checkpoint(args.ckpt)
    print(ckpt_io.describe(ckpt))
    return 0


_COMMANDS = {
    "palette": _cmd_palette,
    "train": _cmd_train,
    "colourise": _cmd_colourise,
    "evaluate": _cmd_evaluate,
    "gallery": _cmd_gallery,
    "inspect": _cmd_inspect,
}


def dispatch(argv):
    """Run one CLI invocation; returns the process exit code."""
    threads = os.environ.get("UCAPS_THREADS")
    if threads:
        import torch

        torch.set_num_threads(max(1, int(threads)))
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
