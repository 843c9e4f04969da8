"""The U-shaped capsule generator.

Stage plan for a 224 input at base width 64:

    preprocess 64@112 -> down1 128@56 -> down2 256@28 -> down3 512@14
    -> primary caps down (16 types x 14x14, d=8) -> routing -> 16 caps d=32
    -> primary caps up 256@28 -> up1 256@56 -> up2 128@56 -> up3 64@56
    -> head (Q@56 softmax, or 2@56 tanh scaled to [-110, 110])

The output side is input_side / 4.  Dropout in the up path doubles as the
stochastic input of the adversarial objective.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .capsule import CapsuleRouting, PrimaryCapsDown, PrimaryCapsUp, RoutingConfig

AB_RANGE = 110.0


@dataclass(frozen=True)
class GeneratorConfig:
    variant: str = "q"  # "q": bin-distribution head; "ab": direct chrominance head
    input_side: int = 224
    base_channels: int = 64
    q_bins: int = 313
    dropout_p: float = 0.5
    routing_iterations: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("q", "ab"):
            raise ValueError(f"variant must be 'q' or 'ab', got {self.variant!r}")
        if self.input_side % 16 != 0 or self.input_side < 16:
            raise ValueError(f"input_side must be a positive multiple of 16, got {self.input_side}")
        if self.q_bins < 1:
            raise ValueError(f"q_bins must be positive, got {self.q_bins}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be positive, got {self.base_channels}")

    @property
    def output_side(self):
        return self.input_side // 4

    @property
    def out_channels(self):
        return self.q_bins if self.variant == "q" else 2


class PreprocessBlock(nn.Module):
    """7x7 stride-2 convolution with BN+ReLU; the skip path max-pools by 2."""

    def __init__(self, out_channels):
        super().__init__()
        self.conv = nn.Conv2d(1, out_channels, kernel_size=7, stride=2, padding=3)
        self.norm = nn.BatchNorm2d(out_channels)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (B, 1, S, S) luminance input, got {tuple(x.shape)}")
        features = F.relu(self.norm(self.conv(x)))
        skip = F.max_pool2d(features, 2)
        return features, skip


class DoubleBlockDown(nn.Module):
    """Two 3x3 stride-1 convs (BN+ReLU each) doubling the channels, then a 2x2 max pool.

    The pooled output is both the next stage's input and the skip tensor.
    """

    def __init__(self, in_channels):
        super().__init__()
        out = 2 * in_channels
        self.conv1 = nn.Conv2d(in_channels, out, kernel_size=3, padding=1)
        self.norm1 = nn.BatchNorm2d(out)
        self.conv2 = nn.Conv2d(out, out, kernel_size=3, padding=1)
        self.norm2 = nn.BatchNorm2d(out)

    def forward(self, x):
        if x.shape[-1] % 2 != 0 or x.shape[-2] % 2 != 0:
            raise ValueError(f"spatial side must be even, got {tuple(x.shape)}")
        y = F.relu(self.norm1(self.conv1(x)))
        y = F.relu(self.norm2(self.conv2(y)))
        return F.max_pool2d(y, 2)


class DoubleBlockUp(nn.Module):
    """Concatenate skip features, refine with two 3x3 convs, optionally upsample x2.

    Dropout after the first convolution is active only in training mode.
    """

    def __init__(self, in_channels, skip_channels, out_channels, upsample, dropout_p=0.5):
        super().__init__()
        self.upsample = upsample
        self.conv1 = nn.Conv2d(in_channels + skip_channels, out_channels, kernel_size=3, padding=1)
        self.norm1 = nn.BatchNorm2d(out_channels)
        self.dropout = nn.Dropout(dropout_p)
        self.conv2 = nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1)
        self.norm2 = nn.BatchNorm2d(out_channels)

    def forward(self, x, skip):
        if x.shape[-2:] != skip.shape[-2:]:
            raise ValueError(
                f"spatial mismatch between features {tuple(x.shape)} and skip {tuple(skip.shape)}"
            )
        y = torch.cat([x, skip], dim=1)
        y = self.dropout(F.relu(self.norm1(self.conv1(y))))
        y = F.relu(self.norm2(self.conv2(y)))
        if self.upsample:
            y = F.interpolate(y, scale_factor=2, mode="nearest")
        return y


class ColourGenerator(nn.Module):
    """Luminance in, per-pixel colour distribution (or ab planes) out."""

    def __init__(self, cfg: GeneratorConfig = GeneratorConfig()):
        super().__init__()
        self.cfg = cfg
        bc = cfg.base_channels
        self.preprocess = PreprocessBlock(bc)
        self.down1 = DoubleBlockDown(bc)
        self.down2 = DoubleBlockDown(2 * bc)
        self.down3 = DoubleBlockDown(4 * bc)
        self.caps_down = PrimaryCapsDown(in_channels=8 * bc)
        self.routing = CapsuleRouting(RoutingConfig(iterations=cfg.routing_iterations))
        self.caps_up = PrimaryCapsUp(out_channels=4 * bc)
        self.up1 = DoubleBlockUp(4 * bc, 4 * bc, 4 * bc, upsample=True, dropout_p=cfg.dropout_p)
        self.up2 = DoubleBlockUp(4 * bc, 2 * bc, 2 * bc, upsample=False, dropout_p=cfg.dropout_p)
        self.up3 = DoubleBlockUp(2 * bc, bc, bc, upsample=False, dropout_p=cfg.dropout_p)
        self.head = nn.Conv2d(bc, cfg.out_channels, kernel_size=1)

    def forward(self, l):
        """Map ``(B, 1, S, S)`` luminance (L/100) to the configured head output.

        Variant ``q`` returns ``(B, Q, S/4, S/4)`` with softmax over the
        bin axis; variant ``ab`` returns ``(B, 2, S/4, S/4)`` in
        ``[-110, 110]``.
        """
        side = self.cfg.input_side
        if l.ndim != 4 or l.shape[1] != 1 or l.shape[2] != side or l.shape[3] != side:
            raise ValueError(f"expected (B, 1, {side}, {side}) input, got {tuple(l.shape)}")
        features, skip0 = self.preprocess(l)
        d1 = self.down1(features)
        d2 = self.down2(d1)
        d3 = self.down3(d2)
        caps = self.caps_down(d3)
        entities = self.routing(caps)
        u = self.caps_up(entities, side=d3.shape[-1])
        u = self.up1(u, d2)
        u = self.up2(u, d1)
        u = self.up3(u, skip0)
        out = self.head(u)
        if self.cfg.variant == "q":
            return torch.softmax(out, dim=1)
        return AB_RANGE * torch.tanh(out)


def build_generator(cfg: GeneratorConfig = GeneratorConfig()):
    """Construct a generator with parameters seeded from ``cfg.seed``."""
    torch.manual_seed(cfg.seed)
    return ColourGenerator(cfg)


def stage_plan(cfg: GeneratorConfig = GeneratorConfig()):
    """The (name, out_channels, out_side) table realised by the generator."""
    bc = cfg.base_channels
    s = cfg.input_side
    caps_side = s // 16
    return [
        ("preprocess", bc, s // 2),
        ("down1", 2 * bc, s // 4),
        ("down2", 4 * bc, s // 8),
        ("down3", 8 * bc, caps_side),
        ("primary_caps_down", 16 * caps_side * caps_side, 8),
        ("routing", 16, 32),
        ("primary_caps_up", 4 * bc, s // 8),
        ("up1", 4 * bc, s // 4),
        ("up2", 2 * bc, s // 4),
        ("up3", bc, s // 4),
        ("head", cfg.out_channels, s // 4),
    ]


def parameter_checksum(module):
    """SHA-256 over the module's state dict (names, shapes, and bytes)."""
    digest = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        digest.update(name.encode())
        digest.update(str(tuple(tensor.shape)).encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()
