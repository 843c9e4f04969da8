"""Capsule kernels: squash, routing by agreement, and the bridge blocks.

Capsule activity tensors are laid out ``(B, n_types, P, d)``: dimension 1
is the capsule type (selecting the shared transform) and dimension 2 the
spatial position, so the type/position tags required by routing are
implicit in the layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


def squash(v, dim=-1):
    """Shrink vectors to norm ``|v|^2 / (1 + |v|^2) < 1``, preserving direction.

    Zero vectors map to zero.
    """
    n2 = (v * v).sum(dim=dim, keepdim=True)
    return v * n2 / (1.0 + n2) / torch.sqrt(n2).clamp_min(1e-12)


@dataclass(frozen=True)
class RoutingConfig:
    """Geometry of one routing step between capsule layers."""

    n_types_in: int = 16
    d_in: int = 8
    n_out: int = 16
    d_out: int = 32
    iterations: int = 3

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if min(self.n_types_in, self.d_in, self.n_out, self.d_out) < 1:
            raise ValueError("capsule geometry must be positive")


class CapsuleRouting(nn.Module):
    """Routing by agreement from typed input capsules to entity capsules.

    One ``d_in x d_out`` transform per (input type, output capsule) pair,
    shared across spatial positions.  Coupling logits start at zero; each
    iteration softmaxes them over output capsules, forms the squashed
    weighted vote sum, and (except after the last iteration) reinforces
    logits by the vote/output agreement.
    """

    def __init__(self, cfg: RoutingConfig = RoutingConfig()):
        super().__init__()
        self.cfg = cfg
        self.transforms = nn.Parameter(
            0.05 * torch.randn(cfg.n_types_in, cfg.n_out, cfg.d_in, cfg.d_out)
        )

    def forward(self, u, return_couplings=False):
        """Route ``(B, n_types, P, d_in)`` capsules to ``(B, n_out, d_out)``.

        With ``return_couplings=True`` also returns the per-iteration
        coupling tensors ``(B, n_types * P, n_out)``.
        """
        cfg = self.cfg
        if u.ndim != 4 or u.shape[1] != cfg.n_types_in or u.shape[3] != cfg.d_in:
            raise ValueError(
                f"expected (B, {cfg.n_types_in}, P, {cfg.d_in}) capsules, got {tuple(u.shape)}"
            )
        batch = u.shape[0]
        votes = torch.einsum("btpi,toij->btpoj", u, self.transforms)
        votes = votes.reshape(batch, -1, cfg.n_out, cfg.d_out)
        logits = torch.zeros(batch, votes.shape[1], cfg.n_out, dtype=u.dtype, device=u.device)
        couplings = []
        out = None
        for it in range(cfg.iterations):
            c = torch.softmax(logits, dim=2)
            couplings.append(c)
            s = (c.unsqueeze(-1) * votes).sum(dim=1)
            out = squash(s, dim=-1)
            if it + 1 < cfg.iterations:
                logits = logits + (votes * out.unsqueeze(1)).sum(dim=-1)
        if return_couplings:
            return out, couplings
        return out


class PrimaryCapsDown(nn.Module):
    """Fold a convolutional feature map into typed primary capsules.

    A 3x3 stride-1 convolution with normalisation maps ``in_channels`` to
    ``n_types * caps_dim`` channels, which are regrouped into one
    ``caps_dim``-vector per (type, row, col) and squashed.
    """

    def __init__(self, in_channels=512, n_types=16, caps_dim=8):
        super().__init__()
        self.in_channels = in_channels
        self.n_types = n_types
        self.caps_dim = caps_dim
        self.conv = nn.Conv2d(in_channels, n_types * caps_dim, kernel_size=3, padding=1)
        self.norm = nn.BatchNorm2d(n_types * caps_dim)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (B, {self.in_channels}, S, S) features, got {tuple(x.shape)}"
            )
        y = self.norm(self.conv(x))
        batch, _, height, width = y.shape
        caps = y.reshape(batch, self.n_types, self.caps_dim, height * width)
        caps = caps.permute(0, 1, 3, 2)
        return squash(caps, dim=-1)


class PrimaryCapsUp(nn.Module):
    """Unfold entity capsules back into a spatial feature map.

    The flattened entity vector is broadcast to every cell of an ``S x S``
    grid, refined by a 3x3 convolution with normalisation and ReLU, and
    nearest-neighbour upsampled by 2.
    """

    def __init__(self, out_channels=256, n_caps=16, caps_dim=32):
        super().__init__()
        self.n_caps = n_caps
        self.caps_dim = caps_dim
        self.conv = nn.Conv2d(n_caps * caps_dim, out_channels, kernel_size=3, padding=1)
        self.norm = nn.BatchNorm2d(out_channels)

    def forward(self, entities, side):
        if entities.ndim != 3 or entities.shape[1:] != (self.n_caps, self.caps_dim):
            raise ValueError(
                f"expected (B, {self.n_caps}, {self.caps_dim}) capsules, got {tuple(entities.shape)}"
            )
        grid = entities.reshape(entities.shape[0], -1, 1, 1).expand(-1, -1, side, side)
        y = F.relu(self.norm(self.conv(grid)))
        return F.interpolate(y, scale_factor=2, mode="nearest")
