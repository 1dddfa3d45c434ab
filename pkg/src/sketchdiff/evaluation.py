"""Evaluation metrics: input-consistency recall, Fréchet distance, sweeps.

REC answers "did the strokes I drew survive into the output?": re-extract
edges from the synthesized image, dilate them by a pixel tolerance, and
measure the fraction of input ink covered.  Edge re-extraction uses this
package's own detector; reports record that so numbers are not confused with
ones produced by other stroke filters.

FID is the Fréchet distance between Gaussian fits of feature embeddings,

    ||mu_a - mu_b||^2 + tr(Sigma_a + Sigma_b - 2 (Sigma_a Sigma_b)^{1/2}),

computed via the symmetric form (A^{1/2} B A^{1/2}) so an eigendecomposition
suffices.  The embedder is pluggable: a seeded random projection by default,
or any TorchScript feature extractor from disk.  Perceptual (LPIPS-style)
distance likewise needs external weights and is reported as null without
them.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from pathlib import Path

import numpy as np
import torch

from .data import LEVELS, dilate_sketch, extract_edges, load_image_png, load_sketch_png, split_records
from .seeding import derive_seed

logger = logging.getLogger(__name__)

EDGE_EXTRACTOR_NOTE = "builtin DoG+Otsu+skeleton extractor, mid level"


# ---------------------------------------------------------------------------
# Input-consistency recall


def ink_recall(
    input_sketch: torch.Tensor, output_edges: torch.Tensor, tolerance_px: int
) -> float:
    """Fraction of input ink pixels within tolerance_px of an output edge."""
    if tolerance_px < 0:
        raise ValueError("tolerance_px must be >= 0")
    if input_sketch.shape != output_edges.shape:
        raise ValueError(
            f"sketch {tuple(input_sketch.shape)} vs edges {tuple(output_edges.shape)}"
        )
    ink = input_sketch > 0.5
    total = int(ink.sum())
    if total == 0:
        raise ValueError("blank input sketch: recall is undefined")
    covered = dilate_sketch(output_edges, tolerance_px) > 0.5
    return int((ink & covered).sum()) / total


def rec_score(
    input_sketch: torch.Tensor, synth_image: torch.Tensor, tolerance_px: int = 2
) -> float:
    """REC: recall of input strokes among edges re-extracted from the output."""
    edges = extract_edges(synth_image, "mid", canvas=synth_image.shape[-1])
    return ink_recall(input_sketch, edges, tolerance_px)


# ---------------------------------------------------------------------------
# Fréchet distance


def _mean_cov(x: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    cov = np.cov(x, rowvar=False) + eps * np.eye(x.shape[1])
    return mu, cov


def fid_score(set_a, set_b, eps: float = 1e-6) -> float:
    """Fréchet distance between Gaussian fits of two feature sets (n, d)."""
    a = np.asarray(set_a, dtype=np.float64)
    b = np.asarray(set_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError("feature sets must be (n, d) with matching d")
    d = a.shape[1]
    for name, s in (("a", a), ("b", b)):
        if s.shape[0] < d + 1:
            raise ValueError(
                f"set {name} has {s.shape[0]} samples; need >= {d + 1} for {d} dims"
            )
    mu_a, cov_a = _mean_cov(a, eps)
    mu_b, cov_b = _mean_cov(b, eps)

    # tr((Sigma_a Sigma_b)^{1/2}) = tr((A^{1/2} Sigma_b A^{1/2})^{1/2}),
    # and the inner matrix is symmetric PSD, so eigh does the whole job.
    w, v = np.linalg.eigh(cov_a)
    root_a = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    inner = root_a @ cov_b @ root_a
    tr_sqrt = float(np.sqrt(np.clip(np.linalg.eigvalsh(inner), 0.0, None)).sum())

    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)


# ---------------------------------------------------------------------------
# Pluggable embedders


class RandomProjectionEmbedder:
    """Fixed seeded Gaussian projection of flattened pixels.

    No learned weights, but FID over it still separates distributions that
    differ in pixel mean/covariance, which is all the toy-scale trend tests
    need.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.name = f"random-projection-d{dim}-s{seed}"
        self._proj: dict[int, np.ndarray] = {}

    def _projection(self, width: int) -> np.ndarray:
        if width not in self._proj:
            rng = np.random.default_rng(derive_seed(self.seed, "randproj", width))
            self._proj[width] = rng.standard_normal((width, self.dim)) / np.sqrt(width)
        return self._proj[width]

    def __call__(self, images: torch.Tensor) -> np.ndarray:
        flat = images.reshape(images.shape[0], -1).numpy().astype(np.float64)
        return flat @ self._projection(flat.shape[1])


class TorchScriptEmbedder:
    """Feature extractor loaded from a TorchScript file on disk."""

    def __init__(self, path: str | Path):
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"external embedder weights not found: {path}")
        self.net = torch.jit.load(str(path))
        self.name = f"torchscript:{path.name}"

    def __call__(self, images: torch.Tensor) -> np.ndarray:
        with torch.no_grad():
            out = self.net(images)
        if out.dim() != 2 or out.shape[0] != images.shape[0]:
            raise ValueError(f"embedder must return (n, d), got {tuple(out.shape)}")
        return out.numpy().astype(np.float64)


def embed_for_fid(images, embedder) -> np.ndarray:
    """Stack images and push them through the embedder in one batch."""
    if isinstance(images, (list, tuple)):
        if not images:
            raise ValueError("need at least one image to embed")
        images = torch.stack(list(images))
    if images.numel() == 0 or images.dim() != 4:
        raise ValueError("images must be a nonempty (n, c, h, w) batch")
    return embedder(images)


def load_perceptual_net(path: str | Path) -> torch.jit.ScriptModule:
    """Load an external pairwise perceptual-distance net (TorchScript)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"perceptual weights not found: {path}")
    return torch.jit.load(str(path))


def perceptual_distance(a: torch.Tensor, b: torch.Tensor, net) -> float:
    """Mean pairwise distance net(a_i, b_i) over two equally long batches."""
    if a.shape != b.shape:
        raise ValueError("batches must have identical shapes")
    with torch.no_grad():
        out = net(a, b)
    return float(torch.as_tensor(out, dtype=torch.float64).mean())


# ---------------------------------------------------------------------------
# Abstraction-level sweep


def eval_sweep(
    pipeline,
    dataset_dir: str | Path,
    manifest: dict,
    levels: tuple[str, ...] = LEVELS,
    split: str = "test",
    tolerance_px: int = 2,
    embedder=None,
    steps: int | None = None,
    sampler: str = "ddim",
    seed: int = 0,
    perceptual_weights: str | Path | None = None,
) -> dict:
    """Synthesize from each abstraction level's sketches and score the lot.

    A failure inside one level is recorded under that level's ``error`` key
    and the remaining levels still run.  Two sweeps with the same arguments
    produce identical reports.
    """
    unknown = set(levels) - set(LEVELS)
    if unknown:
        raise ValueError(f"unknown levels: {sorted(unknown)}")
    dataset_dir = Path(dataset_dir)
    records = split_records(manifest, split)
    if not records:
        raise ValueError(f"split {split!r} is empty")
    if embedder is None:
        embedder = RandomProjectionEmbedder()
    perceptual_net = (
        load_perceptual_net(perceptual_weights) if perceptual_weights else None
    )

    real = torch.stack([load_image_png(dataset_dir / r["image"]) for r in records])
    report_levels: dict[str, dict] = {}
    for level in levels:
        try:
            sketches = [
                load_sketch_png(dataset_dir / r["sketches"][level]) for r in records
            ]
            synths, recs = [], []
            for rec_id, sketch in zip((r["id"] for r in records), sketches):
                img = pipeline.synthesize(
                    sketch,
                    steps=steps,
                    sampler=sampler,
                    seed=derive_seed(seed, "eval", level, rec_id),
                )
                synths.append(img)
                recs.append(rec_score(sketch, img, tolerance_px))
            synth_batch = torch.stack(synths)
            entry = {
                "n": len(records),
                "rec": float(np.mean(recs)),
                "fid": fid_score(
                    embed_for_fid(real, embedder), embed_for_fid(synth_batch, embedder)
                ),
                "lpips": (
                    perceptual_distance(real, synth_batch, perceptual_net)
                    if perceptual_net is not None
                    else None
                ),
            }
        except Exception as exc:  # keep sweeping the other levels
            logger.warning("level %s failed: %s", level, exc)
            entry = {"n": len(records), "error": f"{type(exc).__name__}: {exc}"}
        report_levels[level] = entry

    params = {
        "split": split,
        "tolerance_px": tolerance_px,
        "embedder": embedder.name,
        "steps": steps,
        "sampler": sampler,
        "seed": seed,
        "checkpoint": pipeline.checkpoint_hash,
        "edge_extractor": EDGE_EXTRACTOR_NOTE,
    }
    digest = hashlib.sha256(
        json.dumps({**params, "levels": list(levels)}, sort_keys=True).encode()
    ).hexdigest()
    return {**params, "levels": report_levels, "config_hash": digest}


def write_report(report: dict, path: str | Path) -> None:
    tmp = Path(path).with_suffix(".tmp")
    tmp.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    os.replace(tmp, path)
