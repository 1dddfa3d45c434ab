"""Shared fixtures: one small trained workspace reused across test modules.

Training a 32x32 toy model takes ~10 s; pipeline and evaluation tests only
need *a* trained checkpoint, not a particular one, so they share this
session-scoped run instead of each paying for their own.
"""

import pytest

from sketchdiff.config import TOY_ARCH, TOY_DIFFUSION, DatasetConfig, TrainConfig
from sketchdiff.data import build_dataset, generate_shapes_corpus
from sketchdiff.training import train_codec, train_stage1, train_stage2


@pytest.fixture(scope="session")
def trained_toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("toyrun")
    generate_shapes_corpus(root / "raw", n=30, canvas=32, seed=17)
    manifest = build_dataset(
        root / "raw", root / "ds", DatasetConfig(canvas=32, sra_variants=2, seed=6)
    )
    s1 = train_stage1(
        root / "ds",
        manifest,
        TrainConfig(stage=1, epochs=30, batch_size=8, lr=2e-3, seed=7),
        TOY_ARCH,
    )
    ae = train_codec(
        root / "ds",
        manifest,
        TrainConfig(stage=0, epochs=40, batch_size=8, lr=2e-3, seed=7),
        TOY_ARCH,
    )
    s2 = train_stage2(
        root / "ds",
        manifest,
        s1,
        ae,
        TrainConfig(stage=2, epochs=30, batch_size=8, lr=2e-3, seed=7),
        TOY_DIFFUSION,
    )
    return {"dir": root / "ds", "manifest": manifest, "stage1": s1, "codec": ae, "stage2": s2}
