#!/usr/bin/env python3
"""Generate a folder of smooth synthetic colour images plus a manifest.

Useful for desk-scale training runs when no photo collection is at hand:
the images are low-frequency saturated colour fields, so colourisation
targets are far from neutral gray.
"""

import argparse
from pathlib import Path

import numpy as np

from ucapsnet.colourspace import save_rgb


def toy_image(seed, side):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side] / side
    img = np.empty((side, side, 3))
    for c in range(3):
        fy, fx = rng.uniform(0.5, 2.5, size=2)
        py, px = rng.uniform(0.0, 2.0 * np.pi, size=2)
        img[..., c] = np.sin(2.0 * np.pi * fy * yy + py) * np.cos(2.0 * np.pi * fx * xx + px)
    img = (img - img.min()) / (img.max() - img.min())
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--count", type=int, default=64)
    parser.add_argument("--side", type=int, default=96)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(args.count):
        name = f"toy_{i:04d}.png"
        save_rgb(out / name, toy_image(args.seed + i, args.side))
        names.append(name)
    manifest = out / "manifest.txt"
    manifest.write_text("".join(n + "\n" for n in names), encoding="utf-8")
    print(f"{args.count} images + manifest -> {manifest}")


if __name__ == "__main__":
    main()
