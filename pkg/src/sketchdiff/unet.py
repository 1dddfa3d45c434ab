"""Conditional noise-prediction U-Net.

The denoiser sees the channel concatenation of the noisy image latent
(3 channels) and the sketch conditioning map (8 channels) — 11 input
channels — and predicts the 3-channel noise component.  The conditioning map
is re-concatenated at every denoising step.

Architecture, kept deliberately legible so the parameter count can be checked
by hand:

* stem: 3x3 conv, 11 -> w
* ``depth`` down blocks at widths w, 2w, ...: two 3x3 convs with a SiLU
  between, a per-block linear projection of the timestep embedding added
  after the first conv, then 2x average pooling (skip saved before pooling)
* one middle block of the same two-conv form
* ``depth`` up blocks: nearest 2x upsample, concatenate the skip, two 3x3
  convs with the same timestep injection
* head: 3x3 conv, w -> 3

Timesteps enter through the standard sinusoidal embedding refined by a
two-layer MLP.  Spatial sizes must be divisible by ``2**depth``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .config import COND_CHANNELS, LATENT_CHANNELS

IN_CHANNELS = LATENT_CHANNELS + COND_CHANNELS  # 11
OUT_CHANNELS = LATENT_CHANNELS  # 3


@dataclass(frozen=True)
class UNetConfig:
    base_width: int = 32
    depth: int = 2
    time_embed_dim: int = 64
    in_channels: int = IN_CHANNELS
    out_channels: int = OUT_CHANNELS

    def __post_init__(self) -> None:
        if self.in_channels != IN_CHANNELS or self.out_channels != OUT_CHANNELS:
            raise ValueError(
                f"channel contract is {IN_CHANNELS} in / {OUT_CHANNELS} out, "
                f"got {self.in_channels}/{self.out_channels}"
            )
        if self.base_width < 1 or self.depth < 1:
            raise ValueError("base_width and depth must be positive")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be an even integer >= 2")


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Classic alternating sin/cos positional features of shape (..., dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half - 1, 1)
    )
    angles = t.to(torch.float64).unsqueeze(-1) * freqs
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)


class _ConvPair(nn.Module):
    """conv -> (+ time) -> SiLU -> conv -> SiLU, the shared block body."""

    def __init__(self, cin: int, cout: int, time_dim: int) -> None:
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(x) + self.time_proj(temb)[..., :, None, None]
        h = F.silu(h)
        return F.silu(self.conv2(h))


class ConditionalUNet(nn.Module):
    def __init__(self, config: UNetConfig = UNetConfig()) -> None:
        super().__init__()
        self.config = config
        w, d, td = config.base_width, config.depth, config.time_embed_dim
        widths = [w * 2**i for i in range(d + 1)]

        self.time_mlp = nn.Sequential(nn.Linear(td, td), nn.SiLU(), nn.Linear(td, td))
        self.stem = nn.Conv2d(config.in_channels, w, 3, padding=1)
        self.down = nn.ModuleList(
            _ConvPair(widths[i], widths[i + 1], td) for i in range(d)
        )
        self.middle = _ConvPair(widths[d], widths[d], td)
        self.up = nn.ModuleList(
            _ConvPair(widths[i + 1] + widths[i + 1], widths[i], td)
            for i in reversed(range(d))
        )
        self.head = nn.Conv2d(w, config.out_channels, 3, padding=1)

    def forward(self, z_t: torch.Tensor, t: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        batched = z_t.dim() == 4
        z = z_t if batched else z_t.unsqueeze(0)
        c = cond if batched else cond.unsqueeze(0)
        if z.shape[-3] != LATENT_CHANNELS:
            raise ValueError(f"latent must have {LATENT_CHANNELS} channels, got {z.shape[-3]}")
        if c.shape[-3] != COND_CHANNELS:
            raise ValueError(f"cond must have {COND_CHANNELS} channels, got {c.shape[-3]}")
        if z.shape[-2:] != c.shape[-2:]:
            raise ValueError(f"spatial mismatch {z.shape[-2:]} vs {c.shape[-2:]}")
        if z.shape[-1] % 2**self.config.depth or z.shape[-2] % 2**self.config.depth:
            raise ValueError(
                f"spatial size {tuple(z.shape[-2:])} not divisible by 2^{self.config.depth}"
            )
        t = torch.as_tensor(t)
        if t.dim() == 0:
            t = t.expand(z.shape[0])
        if torch.any(t < 1):
            raise ValueError("timesteps must be >= 1")

        temb = self.time_mlp(
            sinusoidal_embedding(t, self.config.time_embed_dim).to(self.stem.weight.dtype)
        )
        h = self.stem(torch.cat([z, c], dim=-3))
        skips = []
        for block in self.down:
            h = block(h, temb)
            skips.append(h)
            h = F.avg_pool2d(h, 2)
        h = self.middle(h, temb)
        for block in self.up:
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = block(torch.cat([h, skips.pop()], dim=-3), temb)
        out = self.head(h)
        return out if batched else out.squeeze(0)


def init_unet(config: UNetConfig, seed: int) -> ConditionalUNet:
    """Seeded construction: identical seeds give identical parameters."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return ConditionalUNet(config)


def unet_predict(
    z_t: torch.Tensor, t: int | torch.Tensor, cond: torch.Tensor, net: ConditionalUNet
) -> torch.Tensor:
    with torch.no_grad():
        return net(z_t, torch.as_tensor(t), cond)


def count_parameters(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())
