"""Dataset pipeline: paired face images and multi-abstraction sketches.

Disk layout produced by :func:`build_dataset` under one dataset root::

    images/<id>.png            cleaned photo, 8-bit RGB
    sketches/low/<id>.png      edge map extracted at 2x canvas resolution
    sketches/mid/<id>.png      extracted at canvas resolution
    sketches/high/<id>.png     extracted at 0.5x canvas resolution
    sketches/sra/<id>_<k>.png  region-recombined variants
    manifest.json              records + train/val/test split

Sketch PNGs are grayscale with ink black on white; in memory a sketch is a
(1, C, C) float tensor with ink = 1.  Edge extraction is deliberately
self-contained and deterministic: grayscale -> resize to the abstraction
level's resolution -> difference-of-Gaussians -> Otsu threshold -> thin ->
map back to the canvas grid.  Extraction resolution controls how much detail
survives, which is exactly what makes the three levels differ: the ``high``
abstraction (lowest resolution) keeps the fewest strokes.

Seam recombination ("region abstraction" augmentation) stitches each of the
five face regions from a randomly chosen level of the same identity,
recording per-region provenance, so training sees sketches whose detail
level varies within one drawing.
"""

from __future__ import annotations

import io
import json
import logging
import os
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw
from skimage.filters import gaussian, threshold_otsu
from skimage.measure import block_reduce
from skimage.morphology import binary_dilation, disk, skeletonize
from skimage.transform import resize

from .config import DatasetConfig
from .regions import REGION_NAMES, RegionLayout, default_layout
from .seeding import derive_seed, numpy_generator

logger = logging.getLogger(__name__)

LEVELS = ("low", "mid", "high")
LEVEL_SCALES = {"low": 2.0, "mid": 1.0, "high": 0.5}
DOG_SIGMA_FINE = 1.0
DOG_SIGMA_COARSE = 1.6
MANIFEST_VERSION = 1


# ---------------------------------------------------------------------------
# PNG round trips


def image_png_bytes(img: torch.Tensor) -> bytes:
    """(3, H, W) float in [-1, 1] -> encoded 8-bit RGB PNG."""
    if img.dim() != 3 or img.shape[0] != 3:
        raise ValueError(f"image must be (3, H, W), got {tuple(img.shape)}")
    arr = ((img.clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr.permute(1, 2, 0).numpy(), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_image_png(path: str | Path, img: torch.Tensor) -> None:
    """(3, H, W) float in [-1, 1] -> 8-bit RGB file."""
    Path(path).write_bytes(image_png_bytes(img))


def load_image_png(path: str | Path) -> torch.Tensor:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return torch.from_numpy(arr).permute(2, 0, 1) / 127.5 - 1.0


def save_sketch_png(path: str | Path, sketch: torch.Tensor) -> None:
    """(1, C, C) float with ink=1 -> grayscale file, ink black on white."""
    if sketch.dim() != 3 or sketch.shape[0] != 1:
        raise ValueError(f"sketch must be (1, H, W), got {tuple(sketch.shape)}")
    arr = ((1.0 - sketch[0].clamp(0, 1)) * 255.0).round().to(torch.uint8)
    Image.fromarray(arr.numpy(), mode="L").save(path)


def sketch_from_png_bytes(raw: bytes) -> torch.Tensor:
    """Encoded grayscale PNG -> (1, H, W) float sketch, dark pixels = ink."""
    with Image.open(io.BytesIO(raw)) as im:
        arr = np.asarray(im.convert("L"))
    return (torch.from_numpy(arr.copy()) < 128).float().unsqueeze(0)


def load_sketch_png(path: str | Path) -> torch.Tensor:
    return sketch_from_png_bytes(Path(path).read_bytes())


def load_matte_png(path: str | Path) -> torch.Tensor:
    """Grayscale matte: white = keep (1.0), black = background (0.0)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32)
    return torch.from_numpy(arr / 255.0)


# ---------------------------------------------------------------------------
# Preprocessing


def remove_background(image: torch.Tensor, matte: torch.Tensor | None) -> torch.Tensor:
    """Blend background pixels to white: matte 1 keeps, matte 0 whitens."""
    if matte is None:
        return image.clone()
    m = matte.squeeze(0) if matte.dim() == 3 else matte
    if m.shape != image.shape[-2:]:
        raise ValueError(f"matte shape {tuple(m.shape)} != image {tuple(image.shape[-2:])}")
    if m.min() < 0.0 or m.max() > 1.0:
        raise ValueError("matte values must lie in [0, 1]")
    return m * image + (1.0 - m) * 1.0


def extract_edges(image: torch.Tensor, level: str, canvas: int | None = None) -> torch.Tensor:
    """Deterministic edge sketch of ``image`` at one abstraction level.

    ``canvas`` defaults to the image's own size; the level only controls the
    intermediate resolution the detector runs at (2x / 1x / 0.5x canvas).
    Strokes are detected and thinned at the level's own resolution, then
    mapped to the canvas grid with structure-preserving block operations
    (max-pool down, block-repeat up), so a coarser extraction resolution can
    only lose strokes, never invent them — the ink count at high abstraction
    stays below the count at low abstraction.  Strokes from coarse levels
    come out blockier, which is the look of an abstracted sketch.
    """
    if level not in LEVELS:
        raise ValueError(f"unknown abstraction level {level!r}")
    if image.dim() != 3 or image.shape[0] != 3:
        raise ValueError(f"image must be (3, H, W), got {tuple(image.shape)}")
    canvas = canvas or image.shape[-1]
    if canvas % 2:
        raise ValueError(f"canvas {canvas} must be even")
    gray = ((image.clamp(-1, 1) + 1.0) / 2.0).mean(dim=0).numpy().astype(np.float64)
    res = round(canvas * LEVEL_SCALES[level])
    if res != canvas:
        gray = resize(gray, (res, res), order=1, anti_aliasing=res < canvas)
    response = np.abs(
        gaussian(gray, DOG_SIGMA_FINE) - gaussian(gray, DOG_SIGMA_COARSE)
    )
    if response.max() - response.min() < 1e-8:
        return torch.zeros(1, canvas, canvas)
    edges = skeletonize(response > threshold_otsu(response))
    if res > canvas:
        edges = block_reduce(edges, (res // canvas, res // canvas), np.max)
    elif res < canvas:
        # block-repeat widens every stroke to a square band; thin it again
        edges = skeletonize(np.kron(edges, np.ones((canvas // res, canvas // res), dtype=bool)))
    return torch.from_numpy(edges.astype(np.float32)).unsqueeze(0)


def dilate_sketch(sketch: torch.Tensor, radius: int) -> torch.Tensor:
    """Thicken ink by a disk of ``radius`` pixels (0 = unchanged)."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return sketch.clone()
    grown = binary_dilation(sketch[0].numpy() > 0.5, disk(radius))
    return torch.from_numpy(grown.astype(np.float32)).unsqueeze(0)


def sra_recombine(
    sketches: dict[str, torch.Tensor], layout: RegionLayout, seed: int
) -> tuple[torch.Tensor, dict]:
    """Stitch one sketch from per-region random choices of abstraction level.

    Every pixel of the output equals the corresponding pixel of the level
    named in that region's provenance entry; the same seed reproduces both
    the sketch and the provenance exactly.
    """
    missing = set(LEVELS) - set(sketches)
    if missing:
        raise ValueError(f"missing levels: {sorted(missing)}")
    shapes = {tuple(s.shape) for s in sketches.values()}
    if len(shapes) != 1 or shapes.pop() != (1, layout.canvas, layout.canvas):
        raise ValueError("sketches must all be (1, canvas, canvas) for the layout")
    rng = numpy_generator(seed)
    chosen = {name: LEVELS[int(rng.integers(0, len(LEVELS)))] for name in REGION_NAMES}
    out = torch.zeros_like(sketches["mid"])
    for name, level in chosen.items():
        mask = layout.region_mask(name)
        out[0][mask] = sketches[level][0][mask]
    return out, {"seed": seed, "levels": chosen}


# ---------------------------------------------------------------------------
# Dataset build


def build_dataset(
    image_dir: str | Path,
    out_dir: str | Path,
    config: DatasetConfig,
    matte_dir: str | Path | None = None,
    layout: RegionLayout | None = None,
) -> dict:
    """Process every PNG under ``image_dir`` into the dataset layout above.

    Unreadable inputs are skipped with a warning; an empty result is an
    error.  The manifest (returned and written as ``manifest.json``) is
    byte-stable: rebuilding with the same inputs and seed reproduces it
    exactly.
    """
    image_dir, out_dir = Path(image_dir), Path(out_dir)
    layout = layout or default_layout(config.canvas)
    if layout.canvas != config.canvas:
        raise ValueError("layout canvas does not match dataset canvas")
    paths = sorted(p for p in image_dir.glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no PNG images under {image_dir}")

    for sub in ["images", *[f"sketches/{lv}" for lv in LEVELS], "sketches/sra"]:
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    records = []
    for path in paths:
        image_id = path.stem
        try:
            img = load_image_png(path)
        except Exception as exc:  # unreadable file: skip, keep building
            logger.warning("skipping unreadable image %s: %s", path, exc)
            continue
        if img.shape[-1] != img.shape[-2]:
            logger.warning("skipping non-square image %s", path)
            continue
        if img.shape[-1] != config.canvas:
            img = torch.from_numpy(
                resize(img.numpy(), (3, config.canvas, config.canvas), order=1)
            ).float()
        matte = None
        if matte_dir is not None:
            matte_path = Path(matte_dir) / f"{image_id}.png"
            if matte_path.exists():
                matte = load_matte_png(matte_path)
        img = remove_background(img, matte).clamp(-1, 1)
        save_image_png(out_dir / "images" / f"{image_id}.png", img)

        level_sketches = {lv: extract_edges(img, lv, config.canvas) for lv in LEVELS}
        for lv, sk in level_sketches.items():
            save_sketch_png(out_dir / "sketches" / lv / f"{image_id}.png", sk)

        sra_entries = []
        for k in range(config.sra_variants):
            seed = derive_seed(config.seed, "sra", image_id, k)
            stitched, provenance = sra_recombine(level_sketches, layout, seed)
            rel = f"sketches/sra/{image_id}_{k}.png"
            save_sketch_png(out_dir / rel, stitched)
            sra_entries.append({"path": rel, **provenance})

        records.append(
            {
                "id": image_id,
                "image": f"images/{image_id}.png",
                "sketches": {lv: f"sketches/{lv}/{image_id}.png" for lv in LEVELS},
                "sra": sra_entries,
            }
        )

    if not records:
        raise RuntimeError(f"no usable images under {image_dir}")

    ids = [r["id"] for r in records]
    order = numpy_generator(derive_seed(config.seed, "split")).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_train = int(len(ids) * config.split_ratio[0])
    n_val = int(len(ids) * config.split_ratio[1])
    split = {
        "train": sorted(shuffled[:n_train]),
        "val": sorted(shuffled[n_train : n_train + n_val]),
        "test": sorted(shuffled[n_train + n_val :]),
    }

    manifest = {
        "version": MANIFEST_VERSION,
        "canvas": config.canvas,
        "layout": layout.to_dict(),
        "levels": list(LEVELS),
        "records": records,
        "split": split,
    }
    write_manifest(out_dir / "manifest.json", manifest)
    return manifest


def write_manifest(path: str | Path, manifest: dict) -> None:
    tmp = Path(path).with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    os.replace(tmp, path)


def load_manifest(path: str | Path) -> dict:
    manifest = json.loads(Path(path).read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('version')!r}")
    return manifest


def split_records(manifest: dict, split: str) -> list[dict]:
    wanted = set(manifest["split"][split])
    return [r for r in manifest["records"] if r["id"] in wanted]


# ---------------------------------------------------------------------------
# Procedural toy corpus


def generate_shapes_corpus(
    out_dir: str | Path, n: int, canvas: int = 32, seed: int = 0
) -> list[Path]:
    """Draw ``n`` cartoon faces whose parts land inside the default regions.

    Rendered at 4x and downsampled for soft edges.  Head outline, eyes, nose
    and mouth all jitter in position, size, shape variant and intensity, and
    the remainder region gets hair strokes / brow ticks / cheek marks at
    random spots — sketches of two different faces should disagree on a good
    fraction of their ink, which is what conditioning experiments need.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layout = default_layout(canvas)
    rng = numpy_generator(derive_seed(seed, "shapes"))
    scale = 4
    big = canvas * scale
    paths = []
    for i in range(n):
        bg = int(rng.integers(200, 256))
        im = Image.new("RGB", (big, big), (bg, bg, bg))
        drw = ImageDraw.Draw(im)
        pen = max(scale // 2, 1)

        skin = tuple(int(v) for v in rng.integers(90, 220, size=3))
        line = tuple(int(v) for v in rng.integers(0, 60, size=3))
        # each side gets its own margin so head shape and placement decorrelate
        # between identities — the outline is most of a sketch's ink
        m_left, m_right = (int(rng.integers(1, canvas // 6)) * scale for _ in range(2))
        m_top = int(rng.integers(0, canvas // 6)) * scale
        m_bot = int(rng.integers(0, canvas // 10)) * scale
        drw.ellipse(
            [m_left, m_top, big - 1 - m_right, big - 1 - m_bot],
            fill=skin,
            outline=line,
            width=scale,
        )
        margin_y = m_top

        for box in (layout.leye, layout.reye):
            cx = (box.x0 + box.x1) / 2 + float(rng.uniform(-2.2, 2.2))
            cy = (box.y0 + box.y1) / 2 + float(rng.uniform(-2.0, 2.0))
            r = float(rng.uniform(1.0, min(box.width, box.height) / 2.2))
            eye = tuple(int(v) for v in rng.integers(0, 90, size=3))
            drw.ellipse(
                [(cx - r) * scale, (cy - r) * scale, (cx + r) * scale, (cy + r) * scale],
                fill=eye,
                outline=line,
                width=pen,
            )
            if rng.uniform() < 0.4:  # brow tick just above the eye box
                bx = cx + float(rng.uniform(-1.5, 1.5))
                by = box.y0 - float(rng.uniform(1.0, 2.5))
                half = float(rng.uniform(1.0, 2.5))
                tilt = float(rng.uniform(-0.8, 0.8))
                drw.line(
                    [((bx - half) * scale, (by - tilt) * scale),
                     ((bx + half) * scale, (by + tilt) * scale)],
                    fill=line,
                    width=pen,
                )

        nose = layout.nose
        nx = (nose.x0 + nose.x1) / 2 + float(rng.uniform(-1.5, 1.5))
        n_top = nose.y0 + 0.2 * nose.height
        n_bot = nose.y1 - 0.2 * nose.height - float(rng.uniform(0.0, 1.5))
        if rng.uniform() < 0.3:  # plain bridge stroke instead of a triangle
            drw.line(
                [(nx * scale, n_top * scale), (nx * scale, n_bot * scale)],
                fill=line,
                width=pen,
            )
        else:
            half = float(rng.uniform(0.8, nose.width / 2.6))
            drw.polygon(
                [
                    (nx * scale, n_top * scale),
                    ((nx - half) * scale, n_bot * scale),
                    ((nx + half) * scale, n_bot * scale),
                ],
                outline=line,
                width=pen,
            )

        mouth = layout.mouth
        mw = float(rng.uniform(0.22, 0.5)) * mouth.width
        mx = (mouth.x0 + mouth.x1) / 2 + float(rng.uniform(-2.5, 2.5))
        my = (mouth.y0 + mouth.y1) / 2 + float(rng.uniform(-1.5, 1.5))
        mh = float(rng.uniform(0.8, mouth.height / 2.8))
        lip = tuple(int(v) for v in rng.integers(60, 160, size=3))
        box4 = [(mx - mw) * scale, (my - mh) * scale, (mx + mw) * scale, (my + mh) * scale]
        if rng.uniform() < 0.4:  # smile arc instead of a filled ellipse
            drw.arc(box4, start=15, end=165, fill=line, width=pen)
        else:
            drw.ellipse(box4, fill=lip, outline=line, width=pen)

        # hair strokes in the top band of the remainder region
        top = margin_y / scale
        for _ in range(int(rng.integers(0, 4))):
            hx = float(rng.uniform(canvas * 0.25, canvas * 0.75))
            hy = float(rng.uniform(top + 2.0, layout.leye.y0 - 1.5))
            dx = float(rng.uniform(2.0, 6.0)) * (1 if rng.uniform() < 0.5 else -1)
            dy = float(rng.uniform(-2.5, 2.5))
            drw.line(
                [(hx * scale, hy * scale), ((hx + dx) * scale, (hy + dy) * scale)],
                fill=line,
                width=pen,
            )

        # occasional cheek mark beside the nose, outside every part box
        for side in (-1, 1):
            if rng.uniform() < 0.3:
                cx = canvas / 2 + side * float(rng.uniform(9.0, 11.5))
                cy = float(rng.uniform(layout.nose.y0, layout.nose.y1))
                drw.line(
                    [(cx * scale, (cy - 1.0) * scale), (cx * scale, (cy + 1.0) * scale)],
                    fill=line,
                    width=pen,
                )

        im = im.resize((canvas, canvas), Image.LANCZOS)
        path = out_dir / f"face_{i:04d}.png"
        im.save(path)
        paths.append(path)
    return paths
