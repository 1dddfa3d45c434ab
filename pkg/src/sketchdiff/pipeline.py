"""Sketch-to-image synthesis from a trained stage-2 checkpoint.

The pipeline wires the frozen pieces end to end:

    sketch --region coder--> bundle --condition decoder--> 8ch map
    z_T ~ N(0, I) --reverse diffusion (U-Net, conditioned)--> z_0
    z_0 --image codec decoder--> image in [-1, 1]

All sampling randomness comes from one call seed, so a (sketch, options,
seed) triple maps to exactly one output image, bit-for-bit.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .checkpoint import Checkpoint, content_hash, load_checkpoint
from .conditioning import zero_regions
from .diffusion import NoiseSchedule, sample_loop
from .regions import REGION_NAMES
from .seeding import derive_seed, torch_generator
from .training import build_models_from_checkpoint

SAMPLERS = ("ddpm", "ddim")


class SynthesisPipeline:
    """Inference-only bundle of the four trained model groups."""

    def __init__(self, ckpt: Checkpoint, checkpoint_hash: str | None = None):
        needed = {"multi_ae", "image_ae", "tau", "unet"}
        have = ckpt.group_names()
        if not needed <= have:
            raise ValueError(
                f"checkpoint lacks model groups {sorted(needed - have)}; "
                "synthesis needs a completed stage-2 checkpoint"
            )
        if "schedule" not in ckpt.meta:
            raise ValueError("checkpoint carries no noise schedule")
        self.arch, self.layout, models = build_models_from_checkpoint(ckpt)
        self.coder = models["multi_ae"]
        self.codec = models["image_ae"]
        self.tau = models["tau"]
        self.unet = models["unet"]
        for m in (self.coder, self.codec, self.tau, self.unet):
            m.eval()
            for p in m.parameters():
                p.requires_grad_(False)
        self.schedule = NoiseSchedule.from_dict(ckpt.meta["schedule"])
        self.checkpoint_hash = checkpoint_hash or content_hash(ckpt)
        self.meta = ckpt.meta

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthesisPipeline":
        ckpt = load_checkpoint(path)
        return cls(ckpt)

    @property
    def canvas(self) -> int:
        return self.arch.canvas

    def condition_map(
        self, sketch: torch.Tensor, masked_regions: tuple[str, ...] | list[str] = ()
    ) -> torch.Tensor:
        """Sketch -> (possibly partially masked) 8-channel conditioning map."""
        if sketch.shape != (1, self.canvas, self.canvas):
            raise ValueError(
                f"sketch must be (1, {self.canvas}, {self.canvas}), "
                f"got {tuple(sketch.shape)}"
            )
        unknown = set(masked_regions) - set(REGION_NAMES)
        if unknown:
            raise ValueError(f"unknown regions: {sorted(unknown)}")
        with torch.no_grad():
            cond = self.tau(self.coder.encode(sketch))
            if masked_regions:
                cond = zero_regions(cond, self.layout, tuple(masked_regions))
        return cond

    def synthesize(
        self,
        sketch: torch.Tensor,
        steps: int | None = None,
        sampler: str = "ddim",
        seed: int = 0,
        masked_regions: tuple[str, ...] | list[str] = (),
    ) -> torch.Tensor:
        """Run the reverse chain under the sketch's conditioning map.

        ``steps`` defaults to the full chain for ddpm and 50 for ddim.
        Returns a (3, canvas, canvas) image in [-1, 1].
        """
        if sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {sampler!r}")
        if steps is None:
            steps = self.schedule.T if sampler == "ddpm" else min(50, self.schedule.T)
        cond = self.condition_map(sketch, masked_regions)
        gen = torch_generator(derive_seed(seed, "synthesize"))
        with torch.no_grad():
            z0 = sample_loop(
                lambda z, t, c: self.unet(z, t, c),
                cond,
                self.schedule,
                sampler,
                steps,
                gen,
            )
            return self.codec.decode(z0)
