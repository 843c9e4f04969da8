"""In-gamut ab-bin palette, distribution encoding, and decoding.

The ab plane is discretised on a lattice with spacing ``grid_size`` (bin
centres at integer multiples of ``grid_size``).  A bin belongs to the
palette when its centre lies within ``margin * grid_size`` of the cloud of
ab values realisable by 8-bit sRGB pixels; the default margin of 1.35 is
calibrated so that the grid-10 reference palette has the published count
of 313 bins.  At margin 0.708 (half a cell diagonal) the palette would
collapse to exactly the bins containing realisable colours; the extra ring
covers bins that nearest-centre snapping and soft encoding can reach from
the gamut boundary.

A per-pixel colour distribution is an ``(H, W, Q)`` float array whose last
axis sums to 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .colourspace import rgb_to_lab

GRID_SIZE_DEFAULT = 10.0
# Euclidean inclusion margin in units of grid_size (see module docstring).
GAMUT_MARGIN_DEFAULT = 1.35

# The ab occupancy raster: 0.1-unit cells covering [-130.05, 130.05) so
# that lattice points fall on cell centres.
_RASTER_RES = 0.1
_RASTER_LO = -130.05
_RASTER_N = 2601


@dataclass(frozen=True)
class GamutPalette:
    """Ordered ab-bin centres with a lattice-cell index map.

    ``centers`` is ``(Q, 2)`` float64, sorted lexicographically by (a, b);
    every centre is an integer multiple of ``grid_size``.
    """

    grid_size: float
    centers: np.ndarray
    cell_index: dict = field(repr=False)

    def __post_init__(self):
        if len(self.centers) == 0:
            raise ValueError("empty palette")
        object.__setattr__(self, "centers", np.ascontiguousarray(self.centers, dtype=np.float64))

    @property
    def q(self):
        return len(self.centers)

    def index_of(self, cell_a, cell_b):
        """Bin index of the lattice cell ``(cell_a, cell_b)`` (in grid units), or -1."""
        return self.cell_index.get((int(cell_a), int(cell_b)), -1)

    def nearest_indices(self, ab):
        """Index of the Euclidean-nearest centre for each ab row.

        ``ab`` is ``(N, 2)``; ties break to the lowest bin index.
        """
        ab = np.asarray(ab, dtype=np.float64)
        d2 = ((ab[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=-1)
        return d2.argmin(axis=1)


def _gamut_occupancy():
    """Boolean raster of ab cells reachable from the full 8-bit sRGB cube."""
    occ = np.zeros((_RASTER_N, _RASTER_N), dtype=bool)
    levels = np.arange(256, dtype=np.float64) / 255.0
    g_plane, b_plane = np.meshgrid(levels, levels, indexing="ij")
    block = np.empty((8, 256, 256, 3), dtype=np.float64)
    block[..., 1] = g_plane
    block[..., 2] = b_plane
    for r0 in range(0, 256, 8):
        for k in range(8):
            block[k, ..., 0] = levels[r0 + k]
        ab = rgb_to_lab(block)[..., 1:].reshape(-1, 2)
        ia = ((ab[:, 0] - _RASTER_LO) / _RASTER_RES).astype(np.int64)
        ib = ((ab[:, 1] - _RASTER_LO) / _RASTER_RES).astype(np.int64)
        occ[ia, ib] = True
    return occ


def build_palette(grid_size=GRID_SIZE_DEFAULT, margin=GAMUT_MARGIN_DEFAULT):
    """Build the in-gamut bin palette by exhaustive sRGB-cube enumeration.

    Deterministic: two builds produce identical centre lists.  With the
    defaults (grid 10, margin 1.35) the palette has exactly 313 bins.
    """
    if grid_size <= 0:
        raise ValueError(f"grid_size must be positive, got {grid_size}")
    occ = _gamut_occupancy()
    # Exact Euclidean distance from every raster cell centre to the cloud.
    dist = ndimage.distance_transform_edt(~occ, sampling=_RASTER_RES)
    ks = np.arange(-120.0, 120.0 + grid_size / 2.0, grid_size)
    limit = margin * grid_size
    kept = []
    for a in ks:
        for b in ks:
            ia = int(round((a - _RASTER_LO) / _RASTER_RES - 0.5))
            ib = int(round((b - _RASTER_LO) / _RASTER_RES - 0.5))
            if dist[ia, ib] <= limit:
                kept.append((a, b))
    centers = np.array(kept, dtype=np.float64)
    order = np.lexsort((centers[:, 1], centers[:, 0]))
    centers = centers[order]
    cell_index = {
        (int(round(a / grid_size)), int(round(b / grid_size))): i
        for i, (a, b) in enumerate(centers)
    }
    return GamutPalette(grid_size=float(grid_size), centers=centers, cell_index=cell_index)


def encode_ab(ab, palette, mode="hard", k=5, sigma=5.0):
    """Encode ab planes ``(H, W, 2)`` into a per-pixel bin distribution.

    ``hard`` puts all mass on the nearest centre (off-palette pixels snap
    to the nearest centre).  ``soft`` spreads Gaussian weights
    ``exp(-d^2 / 2 sigma^2)`` over the ``k`` nearest centres, normalised
    to sum 1.  Returns ``(H, W, Q)`` float32.
    """
    ab = np.asarray(ab, dtype=np.float64)
    if ab.ndim != 3 or ab.shape[-1] != 2:
        raise ValueError(f"expected (H, W, 2) ab planes, got shape {ab.shape}")
    if palette.q == 0:
        raise ValueError("empty palette")
    h, w = ab.shape[:2]
    flat = ab.reshape(-1, 2)
    out = np.zeros((h * w, palette.q), dtype=np.float32)
    if mode == "hard":
        idx = palette.nearest_indices(flat)
        out[np.arange(len(flat)), idx] = 1.0
    elif mode == "soft":
        k = min(k, palette.q)
        d2 = ((flat[:, None, :] - palette.centers[None, :, :]) ** 2).sum(axis=-1)
        near = np.argpartition(d2, k - 1, axis=1)[:, :k]
        rows = np.arange(len(flat))[:, None]
        weights = np.exp(-d2[rows, near] / (2.0 * sigma * sigma))
        weights /= weights.sum(axis=1, keepdims=True)
        out[rows, near] = weights.astype(np.float32)
    else:
        raise ValueError(f"unknown encode mode {mode!r}")
    return out.reshape(h, w, palette.q)


def decode_distribution(z, palette, method="mode", temperature=1.0):
    """Decode a bin distribution ``(H, W, Q)`` back to ab planes ``(H, W, 2)``.

    ``mode`` picks the argmax centre per pixel (ties break to the lowest
    index).  ``annealed_mean`` takes the expectation of the centres under
    ``probs ** (1/T)`` renormalised; T=1 is the plain expectation.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 3 or z.shape[-1] != palette.q:
        raise ValueError(f"expected (H, W, {palette.q}) distribution, got shape {z.shape}")
    h, w = z.shape[:2]
    flat = z.reshape(-1, palette.q)
    if method == "mode":
        idx = flat.argmax(axis=1)
        ab = palette.centers[idx]
    elif method == "annealed_mean":
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        sharp = flat ** (1.0 / temperature)
        sharp /= sharp.sum(axis=1, keepdims=True)
        ab = sharp @ palette.centers
    else:
        raise ValueError(f"unknown decode method {method!r}")
    return ab.reshape(h, w, 2)


def annealed_mean_torch(probs, centers, temperature=1.0):
    """Differentiable annealed-mean decode for batched torch distributions.

    ``probs`` is ``(B, Q, H, W)`` (non-negative, summing to 1 over Q),
    ``centers`` is a ``(Q, 2)`` tensor.  Returns ``(B, 2, H, W)``.
    Gradients flow through ``probs``.
    """
    import torch

    if probs.shape[1] != centers.shape[0]:
        raise ValueError(
            f"distribution has {probs.shape[1]} bins, palette has {centers.shape[0]}"
        )
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if temperature != 1.0:
        sharp = probs.clamp_min(1e-10) ** (1.0 / temperature)
        probs = sharp / sharp.sum(dim=1, keepdim=True)
    return torch.einsum("bqhw,qc->bchw", probs, centers.to(probs.dtype))


def save_palette_csv(palette, path):
    """Write the palette as ``index,a_center,b_center`` CSV (with header)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "a_center", "b_center"])
        for i, (a, b) in enumerate(palette.centers):
            writer.writerow([i, repr(float(a)), repr(float(b))])


def load_palette_csv(path, grid_size=GRID_SIZE_DEFAULT):
    """Read a palette written by :func:`save_palette_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "a_center", "b_center"]:
            raise ValueError(f"bad palette CSV header: {header!r}")
        rows = [(int(i), float(a), float(b)) for i, a, b in reader]
    rows.sort()
    if [i for i, _, _ in rows] != list(range(len(rows))):
        raise ValueError("palette CSV indices are not 0..Q-1")
    centers = np.array([(a, b) for _, a, b in rows], dtype=np.float64)
    cell_index = {
        (int(round(a / grid_size)), int(round(b / grid_size))): i
        for i, (a, b) in enumerate(centers)
    }
    return GamutPalette(grid_size=float(grid_size), centers=centers, cell_index=cell_index)
