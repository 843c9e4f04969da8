"""Objective terms: quantization cross entropy, L1, and adversarial losses.

All functions take torch tensors; distributions are ``(B, Q, H, W)`` with
the bin axis summing to 1, chrominance planes are ``(B, 2, H, W)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

LOG_CLAMP = 1e-10


@dataclass(frozen=True)
class LossWeights:
    """Term weights of the combined generator objective (defaults: plain sum)."""

    w_gan: float = 1.0
    w_l1: float = 1.0
    w_cl: float = 1.0

    def __post_init__(self):
        if min(self.w_gan, self.w_l1, self.w_cl) < 0:
            raise ValueError("loss weights must be non-negative")


def quantization_loss(z_hat, z):
    """Multinomial cross entropy between predicted and target bin distributions.

    Per pixel ``-sum_q z * log(z_hat)`` with the prediction clamped at
    1e-10 before the log, averaged over pixels and batch.
    """
    if z_hat.shape != z.shape:
        raise ValueError(f"shape mismatch: {tuple(z_hat.shape)} vs {tuple(z.shape)}")
    per_pixel = -(z * torch.log(z_hat.clamp_min(LOG_CLAMP))).sum(dim=1)
    return per_pixel.mean()


def l1_term(pred_ab, gt_ab):
    """Mean absolute difference over all elements."""
    if pred_ab.shape != gt_ab.shape:
        raise ValueError(f"shape mismatch: {tuple(pred_ab.shape)} vs {tuple(gt_ab.shape)}")
    return (pred_ab - gt_ab).abs().mean()


def gan_terms(real_logits, fake_logits):
    """Discriminator and (non-saturating) generator adversarial losses.

    Binary cross entropy with logits against targets 1 (real) and 0
    (fake); the generator term is ``-mean log sigmoid(fake)``.  Stable for
    arbitrary finite logits.
    """
    d_loss = F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()
    g_loss = F.softplus(-fake_logits).mean()
    return d_loss, g_loss


def generator_objective(g_loss, l1, cl, weights: LossWeights = LossWeights()):
    """Weighted sum of the generator terms.

    ``cl`` is the quantization loss for the distribution head, or the mean
    squared chrominance error for the direct-ab head.
    """
    return weights.w_gan * g_loss + weights.w_l1 * l1 + weights.w_cl * cl
