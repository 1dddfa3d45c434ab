"""Run configuration: dataclasses, JSON schemas, and named profiles.

Every long-running entry point (dataset build, the three training stages,
evaluation) is driven by a JSON document validated against the schemas below
before any work starts, so a typo fails fast instead of ten minutes into a
run.  Two built-in profiles are provided:

* ``toy``  — 32x32 procedural shapes, T=100, minutes on a laptop CPU.
* ``full`` — 256x256 faces, T=1000, the published training recipe
  (500-epoch sketch-coder pretrain at batch 64, 300-epoch diffusion stage at
  batch 8, Adam beta1=0.9 beta2=0.999); days of accelerator time, included
  for completeness rather than desk use.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

COND_CHANNELS = 8  # sketch-conditioning map channels, fixed by the model family
LATENT_CHANNELS = 3  # image latent channels, fixed likewise


@dataclass(frozen=True)
class MaskPolicy:
    """Region-dropout policy for conditioning maps during training."""

    p_region: float = 0.2
    p_all: float = 0.1

    def __post_init__(self) -> None:
        for name in ("p_region", "p_all"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True)
class DiffusionConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    kind: str = "linear"


@dataclass(frozen=True)
class ArchConfig:
    """Network sizes shared by training and inference."""

    canvas: int = 256
    downsample_factor: int = 4  # pixel -> latent spatial ratio
    ae_base_width: int = 32  # image codec channel width
    region_latent_dim: int = 512  # per-region sketch feature size
    region_hidden_dim: int = 256  # sketch coder MLP hidden width
    cond_base_width: int = 64  # condition decoder channel width
    unet_base_width: int = 32
    unet_depth: int = 2
    time_embed_dim: int = 64

    def __post_init__(self) -> None:
        if self.canvas % self.downsample_factor:
            raise ValueError("canvas must be divisible by the downsample factor")
        latent = self.canvas // self.downsample_factor
        if latent % (2**self.unet_depth):
            raise ValueError(
                f"latent size {latent} not divisible by 2^depth={2**self.unet_depth}"
            )
        for name in (
            "canvas",
            "downsample_factor",
            "ae_base_width",
            "region_latent_dim",
            "region_hidden_dim",
            "cond_base_width",
            "unet_base_width",
            "unet_depth",
            "time_embed_dim",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def latent_size(self) -> int:
        return self.canvas // self.downsample_factor

    @property
    def bundle_dim(self) -> int:
        return 5 * self.region_latent_dim


@dataclass(frozen=True)
class TrainConfig:
    stage: int  # 0 = image codec, 1 = sketch coder, 2 = conditional diffusion
    epochs: int
    batch_size: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    mask_policy: MaskPolicy = field(default_factory=MaskPolicy)
    seed: int = 0
    checkpoint_every: int = 0  # epochs between mid-run checkpoints; 0 = final only
    grad_clip: float = 0.0  # max gradient norm per step; 0 disables clipping

    def __post_init__(self) -> None:
        if self.stage not in (0, 1, 2):
            raise ValueError(f"stage must be 0, 1 or 2, got {self.stage}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} outside [0, 1)")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        if self.grad_clip < 0:
            raise ValueError("grad_clip must be >= 0")


@dataclass(frozen=True)
class DatasetConfig:
    canvas: int = 256
    sra_variants: int = 2  # seam-recombined sketches per image
    split_ratio: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.canvas < 8:
            raise ValueError("canvas too small")
        if self.sra_variants < 0:
            raise ValueError("sra_variants must be >= 0")
        if abs(sum(self.split_ratio) - 1.0) > 1e-9 or any(
            r < 0 for r in self.split_ratio
        ):
            raise ValueError("split_ratio must be nonnegative and sum to 1")


# ---------------------------------------------------------------------------
# JSON schemas

_MASK_SCHEMA = {
    "type": "object",
    "properties": {
        "p_region": {"type": "number", "minimum": 0, "maximum": 1},
        "p_all": {"type": "number", "minimum": 0, "maximum": 1},
    },
    "additionalProperties": False,
}

_ARCH_SCHEMA = {
    "type": "object",
    "properties": {
        "canvas": {"type": "integer", "minimum": 8},
        "downsample_factor": {"type": "integer", "minimum": 1},
        "ae_base_width": {"type": "integer", "minimum": 1},
        "region_latent_dim": {"type": "integer", "minimum": 1},
        "region_hidden_dim": {"type": "integer", "minimum": 1},
        "cond_base_width": {"type": "integer", "minimum": 1},
        "unet_base_width": {"type": "integer", "minimum": 1},
        "unet_depth": {"type": "integer", "minimum": 1},
        "time_embed_dim": {"type": "integer", "minimum": 2},
    },
    "additionalProperties": False,
}

_DIFFUSION_SCHEMA = {
    "type": "object",
    "properties": {
        "T": {"type": "integer", "minimum": 1},
        "beta_start": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "beta_end": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "kind": {"type": "string", "enum": ["linear"]},
    },
    "additionalProperties": False,
}

_TRAIN_SCHEMA = {
    "type": "object",
    "properties": {
        "stage": {"type": "integer", "enum": [0, 1, 2]},
        "epochs": {"type": "integer", "minimum": 1},
        "batch_size": {"type": "integer", "minimum": 1},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "mask_policy": _MASK_SCHEMA,
        "seed": {"type": "integer", "minimum": 0},
        "checkpoint_every": {"type": "integer", "minimum": 0},
        "grad_clip": {"type": "number", "minimum": 0},
        "arch": _ARCH_SCHEMA,
        "diffusion": _DIFFUSION_SCHEMA,
    },
    "required": ["stage", "epochs", "batch_size", "lr"],
    "additionalProperties": False,
}

_DATASET_SCHEMA = {
    "type": "object",
    "properties": {
        "canvas": {"type": "integer", "minimum": 8},
        "sra_variants": {"type": "integer", "minimum": 0},
        "split_ratio": {
            "type": "array",
            "items": {"type": "number", "minimum": 0, "maximum": 1},
            "minItems": 3,
            "maxItems": 3,
        },
        "seed": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

SCHEMAS = {"train": _TRAIN_SCHEMA, "dataset": _DATASET_SCHEMA}


class ConfigError(ValueError):
    """A config document failed schema validation or construction."""


def validate_config(doc: dict, kind: str) -> dict:
    """Validate ``doc`` against the schema for ``kind``; returns ``doc``."""
    schema = SCHEMAS.get(kind)
    if schema is None:
        raise ConfigError(f"unknown config kind {kind!r}")
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid {kind} config: {exc.message}") from exc
    return doc


def load_config_file(path: str | Path, kind: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return validate_config(doc, kind)


def train_config_from_dict(doc: dict) -> tuple[TrainConfig, ArchConfig, DiffusionConfig]:
    """Split a validated train document into its three typed configs."""
    doc = dict(doc)
    arch = ArchConfig(**doc.pop("arch", {}))
    diffusion = DiffusionConfig(**doc.pop("diffusion", {}))
    mask = MaskPolicy(**doc.pop("mask_policy", {}))
    train = TrainConfig(mask_policy=mask, **doc)
    return train, arch, diffusion


def config_to_dict(
    train: TrainConfig, arch: ArchConfig, diffusion: DiffusionConfig
) -> dict:
    doc = asdict(train)
    doc["mask_policy"] = asdict(train.mask_policy)
    doc["arch"] = asdict(arch)
    doc["diffusion"] = asdict(diffusion)
    return doc


# ---------------------------------------------------------------------------
# Profiles

TOY_ARCH = ArchConfig(
    canvas=32,
    downsample_factor=4,
    ae_base_width=16,
    region_latent_dim=64,
    region_hidden_dim=128,
    cond_base_width=32,
    unet_base_width=32,
    unet_depth=2,
    time_embed_dim=32,
)
TOY_DIFFUSION = DiffusionConfig(T=100, beta_start=1e-3, beta_end=0.05)

FULL_ARCH = ArchConfig()
FULL_DIFFUSION = DiffusionConfig()


def profile(name: str) -> dict:
    """Named bundles of arch/diffusion/training defaults, as plain dicts."""
    if name == "toy":
        return {
            "arch": asdict(TOY_ARCH),
            "diffusion": asdict(TOY_DIFFUSION),
            "train": {
                0: {"stage": 0, "epochs": 40, "batch_size": 16, "lr": 2e-3},
                1: {"stage": 1, "epochs": 60, "batch_size": 16, "lr": 2e-3},
                2: {"stage": 2, "epochs": 15, "batch_size": 8, "lr": 2e-3},
            },
        }
    if name == "full":
        return {
            "arch": asdict(FULL_ARCH),
            "diffusion": asdict(FULL_DIFFUSION),
            "train": {
                0: {"stage": 0, "epochs": 100, "batch_size": 16, "lr": 1e-4},
                1: {"stage": 1, "epochs": 500, "batch_size": 64, "lr": 1e-4},
                2: {"stage": 2, "epochs": 300, "batch_size": 8, "lr": 5e-5},
            },
        }
    raise ConfigError(f"unknown profile {name!r}")
