"""Markovian patch discriminator over (luminance, chrominance) pairs."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn


@dataclass(frozen=True)
class DiscriminatorConfig:
    in_channels: int = 3  # L plus the two ab planes
    widths: tuple = (64, 128, 256, 512)
    kernel: int = 4
    leaky_slope: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if list(self.widths) != sorted(set(self.widths)):
            raise ValueError(f"widths must be strictly increasing, got {self.widths}")
        if self.kernel < 3:
            raise ValueError(f"kernel must be >= 3, got {self.kernel}")


class PatchDiscriminator(nn.Module):
    """Convolution stack emitting a grid of per-patch real/fake logits.

    Strides 2, 2, 2, 1, 1 with padding 1 throughout; normalisation on all
    layers but the first; no sigmoid (losses consume raw logits).  A 56x56
    input yields 5x5 logits.
    """

    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.cfg = cfg
        w = cfg.widths
        k = cfg.kernel
        layers = [
            nn.Conv2d(cfg.in_channels, w[0], k, stride=2, padding=1),
            nn.LeakyReLU(cfg.leaky_slope, inplace=True),
        ]
        for c_in, c_out, stride in ((w[0], w[1], 2), (w[1], w[2], 2), (w[2], w[3], 1)):
            layers += [
                nn.Conv2d(c_in, c_out, k, stride=stride, padding=1),
                nn.BatchNorm2d(c_out),
                nn.LeakyReLU(cfg.leaky_slope, inplace=True),
            ]
        layers.append(nn.Conv2d(w[3], 1, k, stride=1, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, l_ds, ab):
        """Score an ``(B, 1, S, S)`` luminance / ``(B, 2, S, S)`` chrominance pair."""
        if l_ds.shape[0] != ab.shape[0] or l_ds.shape[-2:] != ab.shape[-2:]:
            raise ValueError(
                f"shape mismatch between luminance {tuple(l_ds.shape)} and ab {tuple(ab.shape)}"
            )
        if l_ds.shape[1] != 1 or ab.shape[1] != 2:
            raise ValueError("expected 1 luminance channel and 2 ab channels")
        return self.net(torch.cat([l_ds, ab], dim=1))


def build_discriminator(cfg: DiscriminatorConfig = DiscriminatorConfig()):
    """Construct a discriminator with parameters seeded from ``cfg.seed``."""
    torch.manual_seed(cfg.seed)
    return PatchDiscriminator(cfg)
