"""Two-stage training orchestration.

Stage 1 pretrains the region sketch coder alone on sketches (all abstraction
levels plus seam-recombined variants by default).  Stage 2 trains the
condition decoder and the denoising U-Net jointly on latent diffusion with
masked conditioning, while the sketch coder and the image codec stay frozen —
the freeze is asserted, not assumed.

Every random draw flows from ``TrainConfig.seed`` through labelled
derivations (one per epoch / step / purpose), so training is stateless with
respect to global RNGs: resuming from a checkpoint lands on exactly the same
trajectory as an uninterrupted run, and two identical runs produce
bit-identical parameters.

Per-epoch metrics are appended to a JSON-lines log when a path is given.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict
from itertools import chain
from pathlib import Path

import torch

from .autoencoder import ImageCodec, train_image_ae
from .checkpoint import Checkpoint, save_checkpoint
from .conditioning import (
    MultiRegionAutoencoder,
    init_condition_decoder,
    init_multi_ae,
    mask_condition,
)
from .config import ArchConfig, DiffusionConfig, TrainConfig
from .data import LEVELS, load_image_png, load_sketch_png, split_records
from .diffusion import forward_sample, make_schedule, noise_prediction_loss
from .regions import RegionLayout
from .seeding import derive_seed, numpy_generator, torch_generator
from .unet import ConditionalUNet, UNetConfig, init_unet

logger = logging.getLogger(__name__)

SKETCH_SOURCES = ("all", "levels", "mid")


def _append_log(log_path: str | Path | None, entry: dict) -> None:
    if log_path is None:
        return
    with open(log_path, "a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _params_digest(module: torch.nn.Module) -> str:
    digest = hashlib.sha256()
    for key, tensor in sorted(module.state_dict().items()):
        digest.update(key.encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def _check_arch_canvas(arch: ArchConfig, manifest: dict) -> None:
    """Reject arch/dataset canvas mismatches before any tensors are built.

    Without this, a full-scale default arch on a toy dataset trains stage 1
    against the manifest's layout, records the wrong canvas in the
    checkpoint, and only blows up with a bare shape error deep in stage 2.
    """
    if arch.canvas != int(manifest["canvas"]):
        raise ValueError(
            f"arch canvas {arch.canvas} != dataset canvas {manifest['canvas']}; "
            "the train config's arch profile must match the dataset it trains on"
        )


def sample_timesteps(n: int, T: int, generator: torch.Generator) -> torch.Tensor:
    """Uniform draws over [1, T], the stage-2 timestep distribution."""
    return torch.randint(1, T + 1, (n,), generator=generator)


def _sketch_paths(record: dict, sources: str) -> list[str]:
    if sources == "mid":
        return [record["sketches"]["mid"]]
    paths = [record["sketches"][lv] for lv in LEVELS]
    if sources == "all":
        paths += [entry["path"] for entry in record["sra"]]
    return paths


def load_training_arrays(
    dataset_dir: str | Path,
    manifest: dict,
    split: str = "train",
    sources: str = "all",
) -> tuple[torch.Tensor, list[torch.Tensor]]:
    """Images plus, per image, the stack of its candidate sketches."""
    if sources not in SKETCH_SOURCES:
        raise ValueError(f"sources must be one of {SKETCH_SOURCES}")
    dataset_dir = Path(dataset_dir)
    records = split_records(manifest, split)
    if not records:
        raise ValueError(f"split {split!r} is empty")
    images, sketch_stacks = [], []
    for rec in records:
        images.append(load_image_png(dataset_dir / rec["image"]))
        sketch_stacks.append(
            torch.stack([load_sketch_png(dataset_dir / p) for p in _sketch_paths(rec, sources)])
        )
    return torch.stack(images), sketch_stacks


def train_codec(
    dataset_dir: str | Path,
    manifest: dict,
    config: TrainConfig,
    arch: ArchConfig,
    log_path: str | Path | None = None,
) -> Checkpoint:
    """Stage 0: fit the image codec on the train split."""
    if config.stage != 0:
        raise ValueError("train_codec expects a stage-0 config")
    _check_arch_canvas(arch, manifest)
    images, _ = load_training_arrays(dataset_dir, manifest, "train", sources="mid")
    log: list[dict] = []
    codec, stats = train_image_ae(images, arch, config, log=log)
    for entry in log:
        _append_log(log_path, entry)
    ckpt = Checkpoint(
        meta={
            "stage": 0,
            "arch": asdict(arch),
            "train_config": asdict(config),
            "layout": manifest["layout"],
            "codec_stats": stats,
            "metrics": log,
        }
    )
    ckpt.add_module("image_ae", codec)
    return ckpt


def train_stage1(
    dataset_dir: str | Path,
    manifest: dict,
    config: TrainConfig,
    arch: ArchConfig,
    sources: str = "all",
    log_path: str | Path | None = None,
    out_path: str | Path | None = None,
    resume_from: Checkpoint | None = None,
) -> Checkpoint:
    """Pretrain the region sketch coder by summed-reconstruction MSE."""
    if config.stage != 1:
        raise ValueError("train_stage1 expects a stage-1 config")
    _check_arch_canvas(arch, manifest)
    layout = RegionLayout.from_dict(manifest["layout"])
    _, sketch_stacks = load_training_arrays(dataset_dir, manifest, "train", sources)
    sketches = torch.cat(sketch_stacks)  # every variant is a training item
    n = sketches.shape[0]

    coder = init_multi_ae(layout, arch, derive_seed(config.seed, "stage1", "init"))
    opt = torch.optim.Adam(coder.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    start_epoch = 0
    metrics: list[dict] = []
    if resume_from is not None:
        resume_from.load_module("multi_ae", coder)
        resume_from.load_optimizer("optim/multi_ae", opt)
        start_epoch = int(resume_from.meta["epoch_next"])
        metrics = list(resume_from.meta.get("metrics", []))

    def snapshot(epoch_next: int) -> Checkpoint:
        ckpt = Checkpoint(
            meta={
                "stage": 1,
                "arch": asdict(arch),
                "train_config": asdict(config),
                "layout": manifest["layout"],
                "sources": sources,
                "epoch_next": epoch_next,
                "metrics": metrics,
            }
        )
        ckpt.add_module("multi_ae", coder)
        ckpt.add_optimizer("optim/multi_ae", opt)
        return ckpt

    for epoch in range(start_epoch, config.epochs):
        order = numpy_generator(derive_seed(config.seed, "stage1", "epoch", epoch)).permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            batch = sketches[order[start : start + config.batch_size]]
            loss = torch.mean((coder.decode(coder.encode(batch)) - batch) ** 2)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite sketch-coder loss at epoch {epoch} "
                    f"batch {start // config.batch_size}"
                )
            opt.zero_grad()
            loss.backward()
            if config.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(coder.parameters(), config.grad_clip)
            opt.step()
            losses.append(loss.item())
        entry = {"stage": 1, "epoch": epoch, "loss": sum(losses) / len(losses)}
        metrics.append(entry)
        _append_log(log_path, entry)
        if out_path and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(snapshot(epoch + 1), out_path)

    final = snapshot(config.epochs)
    if out_path:
        save_checkpoint(final, out_path)
    return final


def build_models_from_checkpoint(
    ckpt: Checkpoint,
) -> tuple[ArchConfig, RegionLayout, dict[str, torch.nn.Module]]:
    """Reconstruct whatever model groups a checkpoint carries."""
    arch = ArchConfig(**ckpt.meta["arch"])
    layout = RegionLayout.from_dict(ckpt.meta["layout"])
    models: dict[str, torch.nn.Module] = {}
    if "multi_ae" in ckpt.group_names():
        coder = MultiRegionAutoencoder(
            layout, hidden=arch.region_hidden_dim, latent_dim=arch.region_latent_dim
        )
        ckpt.load_module("multi_ae", coder)
        models["multi_ae"] = coder
    if "image_ae" in ckpt.group_names():
        codec = ImageCodec(base_width=arch.ae_base_width, factor=arch.downsample_factor)
        ckpt.load_module("image_ae", codec)
        models["image_ae"] = codec
    if "tau" in ckpt.group_names():
        tau = init_condition_decoder(arch, 0)
        ckpt.load_module("tau", tau)
        models["tau"] = tau
    if "unet" in ckpt.group_names():
        unet = ConditionalUNet(
            UNetConfig(
                base_width=arch.unet_base_width,
                depth=arch.unet_depth,
                time_embed_dim=arch.time_embed_dim,
            )
        )
        ckpt.load_module("unet", unet)
        models["unet"] = unet
    return arch, layout, models


def train_stage2(
    dataset_dir: str | Path,
    manifest: dict,
    stage1_ckpt: Checkpoint,
    image_ae_ckpt: Checkpoint,
    config: TrainConfig,
    diffusion: DiffusionConfig,
    sources: str = "all",
    log_path: str | Path | None = None,
    out_path: str | Path | None = None,
    resume_from: Checkpoint | None = None,
) -> Checkpoint:
    """Joint conditional-diffusion training of condition decoder and U-Net.

    Per step: pick a sketch variant per image, encode images to latents with
    the frozen codec, draw per-sample timesteps and noise, form the noised
    latents, decode (and randomly mask) the conditioning maps, and minimise
    the mean squared error between true and predicted noise.
    """
    if config.stage != 2:
        raise ValueError("train_stage2 expects a stage-2 config")
    arch, layout, s1_models = build_models_from_checkpoint(stage1_ckpt)
    _check_arch_canvas(arch, manifest)  # the checkpoint's arch, not the config's
    coder: MultiRegionAutoencoder = s1_models["multi_ae"]
    _, _, ae_models = build_models_from_checkpoint(image_ae_ckpt)
    codec: ImageCodec = ae_models["image_ae"]

    for frozen in (coder, codec):
        frozen.eval()
        for p in frozen.parameters():
            p.requires_grad_(False)
    coder_digest = _params_digest(coder)
    codec_digest = _params_digest(codec)

    sched = make_schedule(diffusion.T, diffusion.kind, diffusion.beta_start, diffusion.beta_end)
    tau = init_condition_decoder(arch, derive_seed(config.seed, "stage2", "tau"))
    unet = init_unet(
        UNetConfig(
            base_width=arch.unet_base_width,
            depth=arch.unet_depth,
            time_embed_dim=arch.time_embed_dim,
        ),
        derive_seed(config.seed, "stage2", "unet"),
    )
    opt = torch.optim.Adam(
        chain(tau.parameters(), unet.parameters()),
        lr=config.lr,
        betas=(config.beta1, config.beta2),
    )
    start_epoch = 0
    metrics: list[dict] = []
    if resume_from is not None:
        resume_from.load_module("tau", tau)
        resume_from.load_module("unet", unet)
        resume_from.load_optimizer("optim/stage2", opt)
        start_epoch = int(resume_from.meta["epoch_next"])
        metrics = list(resume_from.meta.get("metrics", []))

    images, sketch_stacks = load_training_arrays(dataset_dir, manifest, "train", sources)
    n = images.shape[0]
    with torch.no_grad():
        latents = codec.encode(images)  # frozen: latents are constants
        bundle_stacks = [coder.encode(stack) for stack in sketch_stacks]

    def snapshot(epoch_next: int) -> Checkpoint:
        ckpt = Checkpoint(
            meta={
                "stage": 2,
                "arch": asdict(arch),
                "train_config": asdict(config),
                "diffusion": asdict(diffusion),
                "schedule": sched.to_dict(),
                "layout": manifest["layout"],
                "sources": sources,
                "epoch_next": epoch_next,
                "metrics": metrics,
                "codec_stats": image_ae_ckpt.meta.get("codec_stats"),
            }
        )
        ckpt.add_module("multi_ae", coder)
        ckpt.add_module("image_ae", codec)
        ckpt.add_module("tau", tau)
        ckpt.add_module("unet", unet)
        ckpt.add_optimizer("optim/stage2", opt)
        return ckpt

    policy = config.mask_policy
    for epoch in range(start_epoch, config.epochs):
        epoch_rng = numpy_generator(derive_seed(config.seed, "stage2", "epoch", epoch))
        order = epoch_rng.permutation(n)
        variant_choice = [
            int(epoch_rng.integers(0, bundle_stacks[i].shape[0])) for i in range(n)
        ]
        losses = []
        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            z0 = latents[idx]
            bundles = torch.stack([bundle_stacks[i][variant_choice[i]] for i in idx])
            gen = torch_generator(derive_seed(config.seed, "stage2", "step", epoch, step))
            t = sample_timesteps(z0.shape[0], sched.T, gen)
            eps = torch.randn(z0.shape, generator=gen)
            z_t = forward_sample(z0, t, eps, sched)
            cond = tau(bundles)
            cond = torch.stack(
                [mask_condition(cond[j], layout, policy, gen) for j in range(cond.shape[0])]
            )
            loss = noise_prediction_loss(eps, unet(z_t, t, cond))
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite diffusion loss at epoch {epoch} batch {step}"
                )
            opt.zero_grad()
            loss.backward()
            if config.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(
                    chain(tau.parameters(), unet.parameters()), config.grad_clip
                )
            opt.step()
            losses.append(loss.item())
        entry = {"stage": 2, "epoch": epoch, "loss": sum(losses) / len(losses)}
        metrics.append(entry)
        _append_log(log_path, entry)
        if out_path and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(snapshot(epoch + 1), out_path)

    if _params_digest(coder) != coder_digest:
        raise AssertionError("frozen sketch-coder parameters changed during stage 2")
    if _params_digest(codec) != codec_digest:
        raise AssertionError("frozen image-codec parameters changed during stage 2")

    final = snapshot(config.epochs)
    if out_path:
        save_checkpoint(final, out_path)
    return final
