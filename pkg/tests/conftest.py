import numpy as np
import pytest
import torch

from ucapsnet.gamut import build_palette

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def palette():
    """The grid-10 reference palette (one full-cube enumeration per session)."""
    return build_palette()


def toy_rgb(seed, side=96):
    """A smooth, saturated synthetic colour image (uint8)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side] / side
    img = np.empty((side, side, 3))
    for c in range(3):
        fy, fx = rng.uniform(0.5, 2.5, size=2)
        py, px = rng.uniform(0.0, 2.0 * np.pi, size=2)
        img[..., c] = np.sin(2.0 * np.pi * fy * yy + py) * np.cos(2.0 * np.pi * fx * xx + px)
    img = (img - img.min()) / (img.max() - img.min())
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


@pytest.fixture
def toy_image():
    return toy_rgb


def write_toy_dataset(directory, count, side=96, seed0=0):
    """Write ``count`` toy PNGs plus a manifest file; returns the manifest path."""
    from ucapsnet.colourspace import save_rgb

    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(count):
        name = f"toy_{i:03d}.png"
        save_rgb(directory / name, toy_rgb(seed0 + i, side=side))
        names.append(name)
    manifest = directory / "manifest.txt"
    manifest.write_text("".join(n + "\n" for n in names), encoding="utf-8")
    return manifest
