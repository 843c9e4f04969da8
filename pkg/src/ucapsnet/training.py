"""Self-supervised data pipeline, adversarial training loop, and logging.

Training pairs are manufactured from colour images: the resized L channel
is the input and the ab channels (downsampled to the prediction side) are
the target, both raw and encoded as a bin distribution.

The metrics log is an append-only CSV with header
``step,epoch,d_loss,g_loss,l1,cl,total``, one row per optimisation step.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import checkpoint as ckpt_io
from .colourspace import load_rgb, resize_bilinear, resize_to_input, rgb_to_lab
from .discriminator import DiscriminatorConfig, build_discriminator
from .gamut import (
    GAMUT_MARGIN_DEFAULT,
    GRID_SIZE_DEFAULT,
    annealed_mean_torch,
    build_palette,
    encode_ab,
)
from .generator import GeneratorConfig, build_generator
from .losses import LossWeights, gan_terms, generator_objective, l1_term, quantization_loss

logger = logging.getLogger("ucapsnet")

METRICS_HEADER = ["step", "epoch", "d_loss", "g_loss", "l1", "cl", "total"]

VARIANTS = ("q", "q_gan", "ab_gan")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    batch_size: int = 32
    epochs: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    variant: str = "q"  # q | q_gan | ab_gan
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    encode_mode: str = "hard"
    soft_k: int = 5
    soft_sigma: float = 5.0
    decode_method: str = "mode"
    decode_temperature: float = 1.0
    deterministic: bool = False
    input_side: int = 224
    base_channels: int = 64
    dropout_p: float = 0.5
    grid_size: float = GRID_SIZE_DEFAULT
    gamut_margin: float = GAMUT_MARGIN_DEFAULT
    checkpoint_every: int = 0  # 0: only at the end of fit()

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def output_side(self):
        return self.input_side // 4

    def generator_config(self, q_bins):
        return GeneratorConfig(
            variant="ab" if self.variant == "ab_gan" else "q",
            input_side=self.input_side,
            base_channels=self.base_channels,
            q_bins=q_bins,
            dropout_p=self.dropout_p,
            seed=self.seed,
        )


@dataclass(frozen=True)
class DatasetManifest:
    root: str
    paths: tuple
    split: str = "train"

    def resolved(self):
        return [os.path.join(self.root, p) for p in self.paths]


def load_manifest(path, split="train"):
    """Read a manifest of newline-separated relative image paths (UTF-8)."""
    with open(path, encoding="utf-8") as fh:
        paths = tuple(line.strip() for line in fh if line.strip())
    return DatasetManifest(root=os.path.dirname(os.path.abspath(path)), paths=paths, split=split)


def make_training_pair(rgb, palette, cfg: TrainConfig):
    """Turn one colour image into (luminance input, target distribution, target ab).

    Returns ``l`` as ``(1, S, S)`` float32 (L/100), ``z`` as ``(s, s, Q)``
    float32, and ``ab`` as ``(2, s, s)`` float32 with ``s = S/4``.
    """
    rgb = resize_to_input(np.asarray(rgb), cfg.input_side)
    lab = rgb_to_lab(rgb)
    l_plane = (lab[..., 0] / 100.0).astype(np.float32)[None]
    side = cfg.output_side
    ab_small = resize_bilinear(lab[..., 1:], side, side)
    z = encode_ab(ab_small, palette, mode=cfg.encode_mode, k=cfg.soft_k, sigma=cfg.soft_sigma)
    return l_plane, z, ab_small.transpose(2, 0, 1).astype(np.float32)


@dataclass
class Models:
    generator: torch.nn.Module
    discriminator: torch.nn.Module


def build_models(cfg: TrainConfig, q_bins):
    generator = build_generator(cfg.generator_config(q_bins))
    discriminator = build_discriminator(DiscriminatorConfig(seed=cfg.seed + 1))
    return Models(generator, discriminator)


def build_optimizers(models: Models, cfg: TrainConfig):
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    opt_g = torch.optim.Adam(models.generator.parameters(), lr=cfg.learning_rate, betas=betas)
    opt_d = torch.optim.Adam(models.discriminator.parameters(), lr=cfg.learning_rate, betas=betas)
    return opt_g, opt_d


def train_step(batch, models, optimizers, cfg, centers, step, epoch, batch_index=0):
    """One discriminator update (GAN variants) followed by one generator update.

    ``batch`` is ``(l, z, ab)`` float32 tensors shaped ``(B, 1, S, S)``,
    ``(B, Q, s, s)`` and ``(B, 2, s, s)``.  Returns the step metrics dict.
    """
    l, z, ab = batch
    opt_g, opt_d = optimizers
    generator, discriminator = models.generator, models.discriminator
    gan = cfg.variant in ("q_gan", "ab_gan")

    out = generator(l)
    if cfg.variant == "ab_gan":
        pred_ab = out
        cl = F.mse_loss(pred_ab, ab)
    else:
        cl = quantization_loss(out, z)
        pred_ab = annealed_mean_torch(out, centers, temperature=1.0)
    l1 = l1_term(pred_ab, ab)

    d_loss_value = 0.0
    g_gan_value = 0.0
    if gan:
        l_ds = F.interpolate(l, size=ab.shape[-2:], mode="bilinear", align_corners=False)
        real_logits = discriminator(l_ds, ab)
        fake_logits = discriminator(l_ds, pred_ab.detach())
        d_loss, _ = gan_terms(real_logits, fake_logits)
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()
        d_loss_value = float(d_loss.detach())

        _, g_gan = gan_terms(real_logits.detach(), discriminator(l_ds, pred_ab))
        total = generator_objective(g_gan, l1, cl, cfg.weights)
        g_gan_value = float(g_gan.detach())
    else:
        # Without the adversarial game only the quantization term is optimised.
        total = cfg.weights.w_cl * cl

    opt_g.zero_grad()
    total.backward()
    opt_g.step()

    metrics = {
        "step": step,
        "epoch": epoch,
        "d_loss": d_loss_value,
        "g_loss": g_gan_value,
        "l1": float(l1.detach()),
        "cl": float(cl.detach()),
        "total": float(total.detach()),
    }
    if not all(np.isfinite(v) for k, v in metrics.items() if k not in ("step", "epoch")):
        raise RuntimeError(
            f"non-finite loss at step {step} (epoch {epoch}, batch index {batch_index}): {metrics}"
        )
    return metrics


def epoch_order(n, seed, epoch):
    """Deterministic shuffle of ``range(n)`` for one epoch (stateless in epoch)."""
    return np.random.default_rng((seed, epoch)).permutation(n)


def load_batch(paths, palette, cfg):
    """Load and encode a batch; unreadable files are skipped with a warning."""
    ls, zs, abs_ = [], [], []
    for path in paths:
        try:
            rgb = load_rgb(path)
        except (OSError, ValueError) as exc:
            logger.warning("skipping unreadable image %s: %s", path, exc)
            continue
        l_plane, z, ab = make_training_pair(rgb, palette, cfg)
        ls.append(l_plane)
        zs.append(z)
        abs_.append(ab)
    if not ls:
        return None
    l = torch.from_numpy(np.stack(ls))
    z = torch.from_numpy(np.stack(zs)).permute(0, 3, 1, 2).contiguous()
    ab = torch.from_numpy(np.stack(abs_))
    return l, z, ab


def _config_echo(cfg: TrainConfig, q_bins, epoch, step_in_epoch, global_step):
    return {
        "format": "ucapsnet-train",
        "variant": cfg.variant,
        "learning_rate": repr(cfg.learning_rate),
        "batch_size": str(cfg.batch_size),
        "epochs": str(cfg.epochs),
        "adam_beta1": repr(cfg.adam_beta1),
        "adam_beta2": repr(cfg.adam_beta2),
        "seed": str(cfg.seed),
        "w_gan": repr(cfg.weights.w_gan),
        "w_l1": repr(cfg.weights.w_l1),
        "w_cl": repr(cfg.weights.w_cl),
        "encode_mode": cfg.encode_mode,
        "soft_k": str(cfg.soft_k),
        "soft_sigma": repr(cfg.soft_sigma),
        "decode_method": cfg.decode_method,
        "decode_temperature": repr(cfg.decode_temperature),
        "deterministic": str(cfg.deterministic),
        "input_side": str(cfg.input_side),
        "base_channels": str(cfg.base_channels),
        "dropout_p": repr(cfg.dropout_p),
        "grid_size": repr(cfg.grid_size),
        "gamut_margin": repr(cfg.gamut_margin),
        "q_bins": str(q_bins),
        "epoch": str(epoch),
        "step_in_epoch": str(step_in_epoch),
        "global_step": str(global_step),
        "torch_rng": ckpt_io.rng_state_hex(),
    }


def config_from_echo(echo):
    """Rebuild a TrainConfig from a checkpoint's config echo."""
    weights = LossWeights(
        w_gan=float(echo["w_gan"]), w_l1=float(echo["w_l1"]), w_cl=float(echo["w_cl"])
    )
    return TrainConfig(
        learning_rate=float(echo["learning_rate"]),
        batch_size=int(echo["batch_size"]),
        epochs=int(echo["epochs"]),
        adam_beta1=float(echo["adam_beta1"]),
        adam_beta2=float(echo["adam_beta2"]),
        variant=echo["variant"],
        seed=int(echo["seed"]),
        weights=weights,
        encode_mode=echo["encode_mode"],
        soft_k=int(echo["soft_k"]),
        soft_sigma=float(echo["soft_sigma"]),
        decode_method=echo["decode_method"],
        decode_temperature=float(echo["decode_temperature"]),
        deterministic=echo["deterministic"] == "True",
        input_side=int(echo["input_side"]),
        base_channels=int(echo["base_channels"]),
        dropout_p=float(echo["dropout_p"]),
        grid_size=float(echo["grid_size"]),
        gamut_margin=float(echo["gamut_margin"]),
    )


def save_training_checkpoint(path, models, optimizers, cfg, q_bins, epoch, step_in_epoch, global_step):
    config = _config_echo(cfg, q_bins, epoch, step_in_epoch, global_step)
    blocks = ckpt_io.collect_state(
        models.generator, models.discriminator, optimizers[0], optimizers[1]
    )
    ckpt_io.write_checkpoint(path, config, blocks)


def load_training_checkpoint(path, cfg=None):
    """Restore models/optimizers/counters/RNG from a training checkpoint.

    Returns ``(models, optimizers, cfg, q_bins, epoch, step_in_epoch,
    global_step)``.  When ``cfg`` is given it overrides the stored recipe
    (the stored architecture fields still shape the models).
    """
    ckpt = ckpt_io.read_checkpoint(path)
    stored = config_from_echo(ckpt.config)
    cfg = stored if cfg is None else cfg
    q_bins = int(ckpt.config["q_bins"])
    models = build_models(stored, q_bins)
    optimizers = build_optimizers(models, cfg)
    ckpt_io.restore_state(ckpt, models.generator, models.discriminator, *optimizers)
    ckpt_io.set_rng_state_hex(ckpt.config["torch_rng"])
    return (
        models,
        optimizers,
        cfg,
        q_bins,
        int(ckpt.config["epoch"]),
        int(ckpt.config["step_in_epoch"]),
        int(ckpt.config["global_step"]),
    )


def fit(manifest, cfg, out_dir, palette=None, resume_from=None):
    """Run the training loop; returns ``(checkpoint_path, metrics_path)``.

    Checkpoints land in ``out_dir/checkpoint.bin`` (periodically when
    ``cfg.checkpoint_every > 0``, always at the end); metrics are appended
    to ``out_dir/metrics.csv`` one row per step.  When resuming, ``cfg``
    may be ``None`` to continue under the checkpoint's stored recipe.
    """
    if not manifest.paths:
        raise ValueError("empty manifest")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "checkpoint.bin"
    metrics_path = out_dir / "metrics.csv"

    if resume_from is not None:
        models, optimizers, cfg, q_bins, start_epoch, start_step_in_epoch, global_step = (
            load_training_checkpoint(resume_from, cfg)
        )
    if cfg is None:
        raise ValueError("a TrainConfig is required unless resuming from a checkpoint")

    if cfg.deterministic:
        torch.use_deterministic_algorithms(True)

    if palette is None:
        palette = build_palette(cfg.grid_size, cfg.gamut_margin)
    centers = torch.from_numpy(palette.centers).float()

    if resume_from is None:
        q_bins = palette.q
        models = build_models(cfg, q_bins)
        optimizers = build_optimizers(models, cfg)
        torch.manual_seed(cfg.seed + 2)  # training-time noise stream
        start_epoch, start_step_in_epoch, global_step = 0, 0, 0

    models.generator.train()
    models.discriminator.train()

    new_log = not metrics_path.exists()
    paths = manifest.resolved()
    with open(metrics_path, "a", newline="", encoding="utf-8") as log:
        writer = csv.writer(log)
        if new_log:
            writer.writerow(METRICS_HEADER)
            log.flush()
        for epoch in range(start_epoch, cfg.epochs):
            order = epoch_order(len(paths), cfg.seed, epoch)
            batches = [
                order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)
            ]
            for batch_index, indices in enumerate(batches):
                if epoch == start_epoch and batch_index < start_step_in_epoch:
                    continue
                batch = load_batch([paths[i] for i in indices], palette, cfg)
                if batch is None:
                    logger.warning("batch %d of epoch %d is empty; skipped", batch_index, epoch)
                    continue
                metrics = train_step(
                    batch, models, optimizers, cfg, centers, global_step, epoch, batch_index
                )
                global_step += 1
                writer.writerow(
                    [
                        metrics["step"],
                        metrics["epoch"],
                        f"{metrics['d_loss']:.8g}",
                        f"{metrics['g_loss']:.8g}",
                        f"{metrics['l1']:.8g}",
                        f"{metrics['cl']:.8g}",
                        f"{metrics['total']:.8g}",
                    ]
                )
                log.flush()
                if cfg.checkpoint_every and global_step % cfg.checkpoint_every == 0:
                    save_training_checkpoint(
                        ckpt_path, models, optimizers, cfg, q_bins,
                        epoch, batch_index + 1, global_step,
                    )
            start_step_in_epoch = 0
    save_training_checkpoint(
        ckpt_path, models, optimizers, cfg, q_bins, cfg.epochs, 0, global_step
    )
    return ckpt_path, metrics_path


def generator_from_checkpoint(path):
    """Load just the generator (eval mode) plus its recipe from a checkpoint."""
    ckpt = ckpt_io.read_checkpoint(path)
    cfg = config_from_echo(ckpt.config)
    q_bins = int(ckpt.config["q_bins"])
    models = build_models(cfg, q_bins)
    ckpt_io.restore_state(ckpt, models.generator, models.discriminator)
    models.generator.eval()
    return models.generator, cfg, q_bins
