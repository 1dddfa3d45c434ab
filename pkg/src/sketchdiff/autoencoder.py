"""Pixel <-> latent image codec.

The diffusion runs in the compressed space of a small convolutional
autoencoder: the encoder maps a (3, H, W) image in [-1, 1] to a (3, H/f, W/f)
latent, the decoder maps it back and clamps to [-1, 1].  The downsampling
factor f is ``2**len(stage widths)`` — two stride-2 stages give the default
f=4, turning 256x256 pixels into a 64x64 latent (or 32x32 toy images into
8x8).

Trained from scratch with a plain mean-squared reconstruction loss; no
variational term, no quantization, no adversarial head.
"""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F

from .config import LATENT_CHANNELS, ArchConfig, TrainConfig
from .seeding import derive_seed, numpy_generator


def _stage_widths(base: int, factor: int) -> list[int]:
    n = int(math.log2(factor))
    if 2**n != factor or n < 1:
        raise ValueError(f"downsample factor {factor} must be a power of two >= 2")
    return [base * 2**i for i in range(n)]


class ImageCodec(nn.Module):
    """Convolutional autoencoder defining the 3-channel latent space."""

    def __init__(self, base_width: int = 32, factor: int = 4) -> None:
        super().__init__()
        widths = _stage_widths(base_width, factor)
        self.factor = factor

        enc: list[nn.Module] = []
        c = 3
        for w in widths:
            enc += [nn.Conv2d(c, w, 3, stride=2, padding=1), nn.SiLU()]
            c = w
        enc.append(nn.Conv2d(c, LATENT_CHANNELS, 3, padding=1))
        self.encoder = nn.Sequential(*enc)

        dec: list[nn.Module] = [nn.Conv2d(LATENT_CHANNELS, widths[-1], 3, padding=1), nn.SiLU()]
        c = widths[-1]
        for w in reversed(widths):
            dec += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(c, w, 3, padding=1),
                nn.SiLU(),
            ]
            c = w
        dec.append(nn.Conv2d(c, 3, 3, padding=1))
        self.decoder = nn.Sequential(*dec)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        _check_image(x, self.factor)
        if x.dim() == 3:
            return self.encoder(x.unsqueeze(0)).squeeze(0)
        return self.encoder(x)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        if z.dim() not in (3, 4) or z.shape[-3] != LATENT_CHANNELS:
            raise ValueError(f"latent must be ({LATENT_CHANNELS}, h, w), got {tuple(z.shape)}")
        if z.dim() == 3:
            return self.decoder(z.unsqueeze(0)).squeeze(0).clamp(-1.0, 1.0)
        return self.decoder(z).clamp(-1.0, 1.0)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(x))


def _check_image(x: torch.Tensor, factor: int) -> None:
    if x.dim() not in (3, 4) or x.shape[-3] != 3:
        raise ValueError(f"image must be (3, H, W), got {tuple(x.shape)}")
    h, w = x.shape[-2], x.shape[-1]
    if h != w:
        raise ValueError(f"image must be square, got {h}x{w}")
    if h % factor:
        raise ValueError(f"size {h} not divisible by downsample factor {factor}")
    if not torch.isfinite(x).all():
        raise ValueError("image contains non-finite values")
    if x.min() < -1.0 - 1e-6 or x.max() > 1.0 + 1e-6:
        raise ValueError("image values outside [-1, 1]")


def init_codec(arch: ArchConfig, seed: int) -> ImageCodec:
    """Seeded construction: same seed, same parameters."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return ImageCodec(base_width=arch.ae_base_width, factor=arch.downsample_factor)


def encode_image(x: torch.Tensor, codec: ImageCodec) -> torch.Tensor:
    with torch.no_grad():
        return codec.encode(x)


def decode_image(z: torch.Tensor, codec: ImageCodec) -> torch.Tensor:
    with torch.no_grad():
        return codec.decode(z)


def train_image_ae(
    images: torch.Tensor,
    arch: ArchConfig,
    config: TrainConfig,
    log: list[dict] | None = None,
) -> tuple[ImageCodec, dict]:
    """Fit the codec on a (N, 3, H, W) stack; returns (codec, stats).

    One conservative loop: shuffle per epoch with a derived seed, plain Adam,
    abort on a non-finite loss naming the offending batch.  ``stats`` carries
    the final-epoch MSE and the training-set per-pixel MAE, persisted next to
    the parameters as a "reconstructs at least this well" reference for
    held-out checks.
    """
    if images.dim() != 4 or images.shape[0] == 0:
        raise ValueError("images must be a nonempty (N, 3, H, W) stack")
    codec = init_codec(arch, derive_seed(config.seed, "image_ae", "init"))
    opt = torch.optim.Adam(codec.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    n = images.shape[0]
    final = float("nan")
    for epoch in range(config.epochs):
        order = numpy_generator(derive_seed(config.seed, "image_ae", "epoch", epoch)).permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            batch = images[order[start : start + config.batch_size]]
            recon = codec.decoder(codec.encoder(batch))  # unclamped for gradients
            loss = F.mse_loss(recon, batch)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite codec loss at epoch {epoch} batch {start // config.batch_size}"
                )
            opt.zero_grad()
            loss.backward()
            if config.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(codec.parameters(), config.grad_clip)
            opt.step()
            losses.append(loss.item())
        final = sum(losses) / len(losses)
        if log is not None:
            log.append({"stage": "image_ae", "epoch": epoch, "loss": final})
    with torch.no_grad():
        mae = (codec(images) - images).abs().mean().item()
    return codec, {"loss": final, "train_mae": mae}
