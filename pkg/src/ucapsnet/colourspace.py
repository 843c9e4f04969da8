"""sRGB / CIELab conversion and image plumbing.

Images are numpy arrays throughout: sRGB images are ``(H, W, 3)`` uint8
(D65 white point, standard piecewise companding), Lab images are
``(H, W, 3)`` float64 with ``L`` in [0, 100] and ``a``/``b`` roughly in
[-110, 110] for anything derived from sRGB.

All functions are pure and safe to call from multiple threads.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

# sRGB (D65) linear-light to XYZ.  The white point is taken as the row sums
# of the matrix so that r == g == b maps to a == b == 0 exactly.
SRGB_TO_XYZ = np.array(
    [
        [0.41239079926595934, 0.357584339383878, 0.1804807884018343],
        [0.21263900587151027, 0.715168678767756, 0.07219231536073371],
        [0.01933081871559182, 0.11919477979462598, 0.9505321522496607],
    ]
)
XYZ_TO_SRGB = np.linalg.inv(SRGB_TO_XYZ)
D65_WHITE = SRGB_TO_XYZ.sum(axis=1)

_DELTA = 6.0 / 29.0


def _srgb_companding_inverse(c):
    return np.where(c > 0.04045, ((c + 0.055) / 1.055) ** 2.4, c / 12.92)


def _srgb_companding(c):
    c = np.clip(c, 0.0, None)
    return np.where(c > 0.0031308, 1.055 * c ** (1.0 / 2.4) - 0.055, 12.92 * c)


def _lab_f(t):
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA * _DELTA) + 4.0 / 29.0)


def _lab_f_inverse(f):
    return np.where(f > _DELTA, f**3, 3.0 * _DELTA * _DELTA * (f - 4.0 / 29.0))


def rgb_to_lab(rgb):
    """Convert sRGB values to CIELab.

    ``rgb`` is ``(..., 3)``; uint8 arrays are read as 8-bit sRGB, float
    arrays as already normalised to [0, 1].  Returns float64 ``(..., 3)``.
    """
    rgb = np.asarray(rgb)
    if rgb.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {rgb.shape}")
    if rgb.dtype == np.uint8:
        rgb = rgb.astype(np.float64) / 255.0
    else:
        rgb = rgb.astype(np.float64)
    linear = _srgb_companding_inverse(rgb)
    xyz = linear @ SRGB_TO_XYZ.T
    f = _lab_f(xyz / D65_WHITE)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_rgb(lab):
    """Convert CIELab values to 8-bit sRGB.

    Out-of-gamut results are clamped per channel to [0, 255] after
    rounding to nearest.  Returns uint8 ``(..., 3)``.
    """
    lab = np.asarray(lab, dtype=np.float64)
    if lab.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {lab.shape}")
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_lab_f_inverse(fx), _lab_f_inverse(fy), _lab_f_inverse(fz)], axis=-1)
    linear = (xyz * D65_WHITE) @ XYZ_TO_SRGB.T
    srgb = _srgb_companding(linear)
    return np.clip(np.rint(srgb * 255.0), 0.0, 255.0).astype(np.uint8)


def split_lab(lab):
    """Split a Lab image into the L plane and the ab planes."""
    lab = np.asarray(lab)
    if lab.ndim != 3 or lab.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3) Lab image, got shape {lab.shape}")
    return lab[..., 0].copy(), lab[..., 1:].copy()


def merge_lab(l_plane, ab_planes):
    """Merge an L plane ``(H, W)`` and ab planes ``(H, W, 2)`` into a Lab image."""
    l_plane = np.asarray(l_plane)
    ab_planes = np.asarray(ab_planes)
    if l_plane.ndim != 2:
        raise ValueError(f"expected (H, W) luminance plane, got shape {l_plane.shape}")
    if ab_planes.shape != l_plane.shape + (2,):
        raise ValueError(
            f"dimension mismatch: L is {l_plane.shape}, ab is {ab_planes.shape}"
        )
    return np.concatenate([l_plane[..., None], ab_planes], axis=-1)


def resize_bilinear(img, out_h, out_w):
    """Bilinear resample to ``(out_h, out_w)`` using half-pixel sample centres.

    ``img`` is ``(H, W)`` or ``(H, W, C)``; edges are replicated.  Returns
    float64.  An identity resize returns the values unchanged.
    """
    src = np.asarray(img, dtype=np.float64)
    if src.ndim not in (2, 3):
        raise ValueError(f"expected 2-d or 3-d array, got shape {src.shape}")
    h, w = src.shape[:2]
    if h == 0 or w == 0 or out_h <= 0 or out_w <= 0:
        raise ValueError("degenerate image dimensions")
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = ys - y0
    wx = xs - x0
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    if src.ndim == 2:
        wy_ = wy[:, None]
        wx_ = wx[None, :]
    else:
        wy_ = wy[:, None, None]
        wx_ = wx[None, :, None]
    top = src[y0c][:, x0c] * (1.0 - wx_) + src[y0c][:, x1c] * wx_
    bot = src[y1c][:, x0c] * (1.0 - wx_) + src[y1c][:, x1c] * wx_
    return top * (1.0 - wy_) + bot * wy_


def resize_to_input(rgb, side):
    """Resize an sRGB image to ``side x side`` with bilinear sampling.

    The full frame is resampled; aspect ratio is not preserved.  A resize
    to the image's own size is an exact copy.
    """
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {rgb.shape}")
    if rgb.shape[0] == 0 or rgb.shape[1] == 0:
        raise ValueError("degenerate image dimensions")
    if side < 8:
        raise ValueError(f"side must be >= 8, got {side}")
    if rgb.shape[0] == side and rgb.shape[1] == side:
        return rgb.copy()
    out = resize_bilinear(rgb.astype(np.float64), side, side)
    return np.clip(np.rint(out), 0.0, 255.0).astype(np.uint8)


def load_rgb(path):
    """Decode a PNG/JPEG file to an ``(H, W, 3)`` uint8 sRGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_rgb(path, rgb):
    """Encode an ``(H, W, 3)`` uint8 sRGB array as PNG/JPEG (by extension)."""
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3) uint8 image, got {rgb.dtype} {rgb.shape}")
    Image.fromarray(rgb, mode="RGB").save(path)
