"""PSNR metric, batch evaluation reports, and comparison galleries."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, field

import numpy as np
import torch
from PIL import Image

from .colourspace import lab_to_rgb, merge_lab, resize_bilinear
from .gamut import decode_distribution
from .training import load_rgb, logger, make_training_pair

PSNR_CAP_DB = 100.0
_TILE_GUTTER = 4


def psnr_ab(pred_ab, gt_ab):
    """Peak signal-to-noise ratio between ab planes, in dB.

    Channels are normalised as ``(v + 128) / 256`` so the peak is 1; the
    MSE runs over both channels.  A zero-error pair reports the cap value
    100.0 dB.
    """
    pred_ab = np.asarray(pred_ab, dtype=np.float64)
    gt_ab = np.asarray(gt_ab, dtype=np.float64)
    if pred_ab.shape != gt_ab.shape:
        raise ValueError(f"shape mismatch: {pred_ab.shape} vs {gt_ab.shape}")
    diff = (pred_ab - gt_ab) / 256.0
    mse = float((diff * diff).mean())
    if mse < 1e-10:
        return PSNR_CAP_DB
    return 10.0 * math.log10(1.0 / mse)


@dataclass
class EvalReport:
    rows: list  # (path, psnr_db)
    config_echo: dict = field(default_factory=dict)

    @property
    def mean(self):
        return statistics.fmean(p for _, p in self.rows) if self.rows else float("nan")

    @property
    def median(self):
        return statistics.median(p for _, p in self.rows) if self.rows else float("nan")

    @property
    def stddev(self):
        if len(self.rows) < 2:
            return 0.0 if self.rows else float("nan")
        return statistics.stdev(p for _, p in self.rows)


def evaluate(generator, palette, manifest, cfg):
    """Score every manifest image: forward, decode, PSNR against 1/4-scale ab."""
    generator.eval()
    rows = []
    for path in manifest.resolved():
        try:
            rgb = load_rgb(path)
        except (OSError, ValueError) as exc:
            logger.warning("skipping unreadable image %s: %s", path, exc)
            continue
        pred_ab, _, gt_ab = predict_ab(generator, palette, rgb, cfg)
        rows.append((path, psnr_ab(pred_ab, gt_ab.transpose(1, 2, 0))))
    echo = {
        "variant": cfg.variant,
        "decode_method": cfg.decode_method,
        "decode_temperature": repr(cfg.decode_temperature),
        "input_side": str(cfg.input_side),
    }
    return EvalReport(rows=rows, config_echo=echo)


def predict_ab(generator, palette, rgb, cfg):
    """Forward one image; returns ``(pred_ab (s,s,2), l_plane (S,S), gt_ab (2,s,s))``."""
    l_plane, _, gt_ab = make_training_pair(rgb, palette, cfg)
    with torch.no_grad():
        out = generator(torch.from_numpy(l_plane[None]))
    if cfg.variant == "ab_gan":
        pred_ab = out[0].numpy().transpose(1, 2, 0).astype(np.float64)
    else:
        z = out[0].numpy().transpose(1, 2, 0)
        pred_ab = decode_distribution(
            z, palette, method=cfg.decode_method, temperature=cfg.decode_temperature
        )
    return pred_ab, l_plane[0] * 100.0, gt_ab


def reconstruct_rgb(l_plane, ab_small):
    """Merge a full-resolution L plane with upsampled ab planes into sRGB."""
    height, width = l_plane.shape
    ab_full = resize_bilinear(ab_small, height, width)
    return lab_to_rgb(merge_lab(l_plane, ab_full))


def write_report(report, path):
    """Write rows as ``path,psnr_db`` CSV; aggregates go in ``#`` footer lines."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "psnr_db"])
        for row_path, psnr in report.rows:
            writer.writerow([row_path, f"{psnr:.10g}"])
        fh.write(f"# count={len(report.rows)}\n")
        if report.rows:
            fh.write(f"# mean={report.mean:.10g}\n")
            fh.write(f"# median={report.median:.10g}\n")
            fh.write(f"# stddev={report.stddev:.10g}\n")
        else:
            fh.write("# mean=undefined\n# median=undefined\n# stddev=undefined\n")
        for key in sorted(report.config_echo):
            fh.write(f"# {key}={report.config_echo[key]}\n")


def parse_report(path):
    """Read back a report written by :func:`write_report`."""
    echo = {}
    data_lines = []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "path,psnr_db":
        raise ValueError(f"bad report header in {path}")
    for line in lines[1:]:
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key not in ("count", "mean", "median", "stddev"):
                echo[key] = value
        else:
            data_lines.append(line)
    rows = [(row[0], float(row[1])) for row in csv.reader(data_lines)]
    return EvalReport(rows=rows, config_echo=echo)


def emit_gallery(triples, path, tile_side=224):
    """Render a grid PNG: one row per image, columns grayscale/predicted/truth.

    Each entry of ``triples`` is three ``(tile_side, tile_side, 3)`` uint8
    images.  Layout is deterministic with a fixed 4-pixel white gutter.
    """
    if not triples:
        raise ValueError("gallery needs at least one image triple")
    for triple in triples:
        for tile in triple:
            if np.asarray(tile).shape != (tile_side, tile_side, 3):
                raise ValueError(
                    f"gallery tiles must be ({tile_side}, {tile_side}, 3), got {np.asarray(tile).shape}"
                )
    g = _TILE_GUTTER
    rows = len(triples)
    height = rows * tile_side + (rows + 1) * g
    width = 3 * tile_side + 4 * g
    canvas = np.full((height, width, 3), 255, dtype=np.uint8)
    for r, triple in enumerate(triples):
        y = g + r * (tile_side + g)
        for c, tile in enumerate(triple):
            x = g + c * (tile_side + g)
            canvas[y : y + tile_side, x : x + tile_side] = tile
    Image.fromarray(canvas, mode="RGB").save(path, format="PNG")


def gallery_triples(generator, palette, manifest, cfg, limit=None):
    """Build (grayscale, prediction, ground truth) tiles for gallery rendering."""
    triples = []
    for path in manifest.resolved():
        if limit is not None and len(triples) >= limit:
            break
        try:
            rgb = load_rgb(path)
        except (OSError, ValueError) as exc:
            logger.warning("skipping unreadable image %s: %s", path, exc)
            continue
        pred_ab, l_plane, gt_ab = predict_ab(generator, palette, rgb, cfg)
        gray = reconstruct_rgb(l_plane, np.zeros_like(pred_ab))
        pred = reconstruct_rgb(l_plane, pred_ab)
        truth = reconstruct_rgb(l_plane, gt_ab.transpose(1, 2, 0))
        triples.append((gray, pred, truth))
    return triples
