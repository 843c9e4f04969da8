#!/usr/bin/env python3
"""Desk-scale end-to-end experiment: overfit 8 toy images and inspect results.

Builds a small synthetic dataset, trains the distribution-head variant for
a few hundred steps, then reports PSNR against the constant-gray baseline
and writes a comparison gallery.  Finishes in a few minutes on one CPU
core.
"""

import argparse
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import torch

from ucapsnet.colourspace import load_rgb
from ucapsnet.evaluation import emit_gallery, evaluate, gallery_triples, psnr_ab
from ucapsnet.gamut import build_palette
from ucapsnet.training import (
    TrainConfig,
    fit,
    generator_from_checkpoint,
    load_manifest,
    make_training_pair,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/overfit_toy")
    parser.add_argument("--images", type=int, default=8)
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--lr", type=float, default=3e-3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    torch.set_num_threads(max(1, torch.get_num_threads()))
    out = Path(args.out)
    data = out / "data"
    subprocess.run(
        [sys.executable, str(Path(__file__).with_name("make_toy_dataset.py")),
         "--out", str(data), "--count", str(args.images), "--side", "96",
         "--seed", str(args.seed)],
        check=True,
    )
    manifest = load_manifest(data / "manifest.txt")

    print("building palette ...")
    palette = build_palette()
    cfg = TrainConfig(
        variant="q",
        epochs=args.steps,  # full-batch: one step per epoch
        batch_size=args.images,
        learning_rate=args.lr,
        input_side=64,
        base_channels=32,
        seed=args.seed,
        deterministic=True,
        decode_method="mode",
    )
    print(f"training {args.steps} steps ...")
    start = time.time()
    ckpt_path, metrics_path = fit(manifest, cfg, out / "run", palette=palette)
    print(f"trained in {time.time() - start:.0f}s -> {ckpt_path}")

    rows = metrics_path.read_text().strip().splitlines()[1:]
    cl = [float(r.split(",")[5]) for r in rows]
    print(f"quantization loss: {cl[0]:.3f} -> {cl[-1]:.3f} ({cl[-1] / cl[0]:.1%})")

    generator, loaded_cfg, _ = generator_from_checkpoint(ckpt_path)
    report = evaluate(generator, palette, manifest, loaded_cfg)
    baseline = []
    for path in manifest.resolved():
        _, _, ab = make_training_pair(load_rgb(path), palette, loaded_cfg)
        gt = ab.transpose(1, 2, 0)
        baseline.append(psnr_ab(np.zeros_like(gt), gt))
    print(f"mean PSNR {report.mean:.2f} dB vs constant-gray {np.mean(baseline):.2f} dB")

    triples = gallery_triples(generator, palette, manifest, loaded_cfg, limit=6)
    gallery_path = out / "gallery.png"
    emit_gallery(triples, gallery_path, tile_side=loaded_cfg.input_side)
    print(f"gallery -> {gallery_path}")


if __name__ == "__main__":
    main()
