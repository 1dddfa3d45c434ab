"""Sketch conditioning: region coder, condition decoder, and mask dropout.

A sketch is conditioned on in three steps:

1. :class:`MultiRegionAutoencoder` holds five small per-region autoencoders
   (left eye, right eye, nose, mouth, remainder face).  Each encoder maps its
   cropped patch to a fixed-size feature vector; concatenated in the order
   ``leye, reye, nose, mouth, face`` they form the bundle ``S'``.  Each
   decoder maps its vector back to a patch placed at the region's canvas
   position, masked so it cannot leak outside its own region; the summed
   patches are the reconstruction, and ``mean((sum_i dec_i(enc_i(S)) - S)^2)``
   is the pretraining loss.
2. :class:`ConditionDecoder` upsamples the bundle into an 8-channel map at
   the latent resolution of the image codec — the tensor concatenated with
   the noisy latent inside the denoiser.
3. :func:`mask_condition` applies region-level dropout to that map during
   training (each region zeroed independently with probability ``p_region``,
   the whole map with probability ``p_all``), which is what makes partial
   sketches usable at inference time; :func:`zero_regions` is the
   deterministic variant exposed to users who deliberately leave regions
   unconstrained.

The sketch coder is pretrained alone (stage 1) and frozen afterwards; the
condition decoder trains jointly with the denoiser (stage 2).
"""

from __future__ import annotations

import torch
from torch import nn

from .config import COND_CHANNELS, ArchConfig, MaskPolicy
from .regions import REGION_NAMES, RegionLayout, crop_regions, embed_region
from .seeding import torch_generator


class _PatchCoder(nn.Module):
    """MLP autoencoder for one region patch of fixed shape."""

    def __init__(self, patch_shape: tuple[int, int], hidden: int, latent: int) -> None:
        super().__init__()
        self.patch_shape = patch_shape
        n = patch_shape[0] * patch_shape[1]
        self.enc = nn.Sequential(nn.Linear(n, hidden), nn.SiLU(), nn.Linear(hidden, latent))
        self.dec = nn.Sequential(nn.Linear(latent, hidden), nn.SiLU(), nn.Linear(hidden, n))

    def encode(self, patch: torch.Tensor) -> torch.Tensor:
        return self.enc(patch.flatten(start_dim=-3))

    def decode(self, vec: torch.Tensor) -> torch.Tensor:
        out = self.dec(vec)
        return out.reshape(out.shape[:-1] + (1,) + self.patch_shape)


class MultiRegionAutoencoder(nn.Module):
    """Five per-region patch coders sharing one latent width."""

    def __init__(self, layout: RegionLayout, hidden: int = 256, latent_dim: int = 512) -> None:
        super().__init__()
        self.layout = layout
        self.latent_dim = latent_dim
        shapes = {n: (b.height, b.width) for n, b in layout.component_boxes().items()}
        shapes["face"] = (layout.canvas, layout.canvas)
        self.coders = nn.ModuleDict(
            {name: _PatchCoder(shapes[name], hidden, latent_dim) for name in REGION_NAMES}
        )

    def encode(self, sketch: torch.Tensor) -> torch.Tensor:
        """Sketch (1, C, C) or batch (B, 1, C, C) -> bundle (5*latent,) or (B, 5*latent)."""
        batched = sketch.dim() == 4
        items = sketch if batched else sketch.unsqueeze(0)
        bundles = []
        for item in items:
            patches = crop_regions(item, self.layout)
            bundles.append(
                torch.cat([self.coders[name].encode(patches[name]) for name in REGION_NAMES])
            )
        out = torch.stack(bundles)
        return out if batched else out.squeeze(0)

    def decode(self, bundle: torch.Tensor) -> torch.Tensor:
        """Bundle -> summed per-region reconstructions on the full canvas."""
        batched = bundle.dim() == 2
        items = bundle if batched else bundle.unsqueeze(0)
        if items.shape[-1] != 5 * self.latent_dim:
            raise ValueError(
                f"bundle length {items.shape[-1]} != 5*{self.latent_dim}"
            )
        outs = []
        for vec in items:
            total = torch.zeros(1, self.layout.canvas, self.layout.canvas, dtype=vec.dtype)
            for i, name in enumerate(REGION_NAMES):
                piece = vec[i * self.latent_dim : (i + 1) * self.latent_dim]
                total = total + embed_region(
                    self.coders[name].decode(piece), name, self.layout
                )
            outs.append(total)
        out = torch.stack(outs)
        return out if batched else out.squeeze(0)

    def forward(self, sketch: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(sketch))


def init_multi_ae(layout: RegionLayout, arch: ArchConfig, seed: int) -> MultiRegionAutoencoder:
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return MultiRegionAutoencoder(
            layout, hidden=arch.region_hidden_dim, latent_dim=arch.region_latent_dim
        )


def encode_sketch(sketch: torch.Tensor, coder: MultiRegionAutoencoder) -> torch.Tensor:
    with torch.no_grad():
        return coder.encode(sketch)


def reconstruct_sketch(bundle: torch.Tensor, coder: MultiRegionAutoencoder) -> torch.Tensor:
    with torch.no_grad():
        return coder.decode(bundle)


def sketch_reconstruction_loss(sketch: torch.Tensor, recon: torch.Tensor) -> torch.Tensor:
    """Mean squared error between a sketch and its summed reconstruction."""
    if sketch.shape != recon.shape:
        raise ValueError(f"shape mismatch {tuple(sketch.shape)} vs {tuple(recon.shape)}")
    return torch.mean((recon - sketch) ** 2)


class ConditionDecoder(nn.Module):
    """Bundle vector -> (8, h, w) conditioning map at latent resolution.

    A linear layer shapes the bundle into a 4x4 feature block, transposed
    convolutions double the spatial size until the target is reached, and a
    3x3 head emits the 8 channels.  Requires ``latent_size = 4 * 2**k``.
    """

    def __init__(self, bundle_dim: int, latent_size: int, base_width: int = 64) -> None:
        super().__init__()
        size, ups = 4, 0
        while size < latent_size:
            size *= 2
            ups += 1
        if size != latent_size:
            raise ValueError(f"latent size {latent_size} is not 4*2^k")
        self.latent_size = latent_size
        self.bundle_dim = bundle_dim
        self.stem = nn.Linear(bundle_dim, base_width * 16)
        self.base_width = base_width
        blocks: list[nn.Module] = []
        c = base_width
        for _ in range(ups):
            nxt = max(c // 2, COND_CHANNELS)
            blocks += [nn.ConvTranspose2d(c, nxt, 4, stride=2, padding=1), nn.SiLU()]
            c = nxt
        self.blocks = nn.Sequential(*blocks)
        self.head = nn.Conv2d(c, COND_CHANNELS, 3, padding=1)

    def forward(self, bundle: torch.Tensor) -> torch.Tensor:
        batched = bundle.dim() == 2
        items = bundle if batched else bundle.unsqueeze(0)
        if items.shape[-1] != self.bundle_dim:
            raise ValueError(f"bundle length {items.shape[-1]} != {self.bundle_dim}")
        x = self.stem(items).reshape(-1, self.base_width, 4, 4)
        x = self.head(self.blocks(x))
        return x if batched else x.squeeze(0)


def init_condition_decoder(arch: ArchConfig, seed: int) -> ConditionDecoder:
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return ConditionDecoder(
            bundle_dim=arch.bundle_dim,
            latent_size=arch.latent_size,
            base_width=arch.cond_base_width,
        )


def decode_condition(bundle: torch.Tensor, decoder: ConditionDecoder) -> torch.Tensor:
    with torch.no_grad():
        return decoder(bundle)


def _latent_region_masks(layout: RegionLayout, latent_size: int) -> dict[str, torch.Tensor]:
    """Region membership masks rescaled to the conditioning map's grid."""
    scaled = layout.scaled(latent_size)
    return {name: scaled.region_mask(name) for name in REGION_NAMES}


def zero_regions(
    cond: torch.Tensor, layout: RegionLayout, names: tuple[str, ...] | list[str]
) -> torch.Tensor:
    """Zero the spatial support of the named regions across all channels."""
    unknown = set(names) - set(REGION_NAMES)
    if unknown:
        raise ValueError(f"unknown regions: {sorted(unknown)}")
    if cond.shape[-1] != cond.shape[-2]:
        raise ValueError("conditioning map must be square")
    out = cond.clone()
    masks = _latent_region_masks(layout, cond.shape[-1])
    for name in names:
        out[..., masks[name]] = 0.0
    return out


def mask_condition(
    cond: torch.Tensor,
    layout: RegionLayout,
    policy: MaskPolicy,
    generator: torch.Generator,
) -> torch.Tensor:
    """Random region dropout: shape-preserving, zeroing only.

    Draws one uniform variate for the full-drop branch, then one per region
    in the fixed ``leye, reye, nose, mouth, face`` order, so a given seed
    always produces the same pattern.
    """
    draws = torch.rand(1 + len(REGION_NAMES), generator=generator)
    if draws[0] < policy.p_all:
        return torch.zeros_like(cond)
    dropped = [name for i, name in enumerate(REGION_NAMES) if draws[1 + i] < policy.p_region]
    return zero_regions(cond, layout, dropped)


def random_mask_generator(seed: int) -> torch.Generator:
    """Convenience wrapper so callers don't need the seeding module."""
    return torch_generator(seed)
