"""Facial region geometry.

A sketch canvas is partitioned into five named regions: four axis-aligned
component boxes (``leye``, ``reye``, ``nose``, ``mouth``) plus ``face``,
defined as everything the boxes do not cover.  Boxes are half-open in both
axes — ``(x0, y0)`` inclusive, ``(x1, y1)`` exclusive — so two boxes that
merely share an edge do not overlap and the five regions tile the canvas with
per-pixel membership count exactly one.

The default layout targets 256x256 aligned face crops.  Layouts for other
canvas sizes are produced by :meth:`RegionLayout.scaled`, which rounds each
coordinate; rounding is monotone, so disjointness survives scaling (a box can
only collapse to zero area, which the constructor rejects).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

REGION_NAMES = ("leye", "reye", "nose", "mouth", "face")
COMPONENT_NAMES = REGION_NAMES[:-1]


@dataclass(frozen=True)
class RegionBox:
    """Half-open pixel rectangle: x in [x0, x1), y in [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(f"degenerate box {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def overlaps(self, other: "RegionBox") -> bool:
        return (
            self.x0 < other.x1
            and other.x0 < self.x1
            and self.y0 < other.y1
            and other.y0 < self.y1
        )

    def scaled(self, factor: float) -> "RegionBox":
        return RegionBox(
            round(self.x0 * factor),
            round(self.y0 * factor),
            round(self.x1 * factor),
            round(self.y1 * factor),
        )


@dataclass(frozen=True)
class RegionLayout:
    """Canvas size plus the four component boxes; ``face`` is the remainder."""

    canvas: int
    leye: RegionBox
    reye: RegionBox
    nose: RegionBox
    mouth: RegionBox

    def __post_init__(self) -> None:
        if self.canvas < 2:
            raise ValueError(f"canvas {self.canvas} too small")
        boxes = self.component_boxes()
        for name, box in boxes.items():
            if box.x1 > self.canvas or box.y1 > self.canvas:
                raise ValueError(f"box {name} {box} exceeds canvas {self.canvas}")
        names = list(boxes)
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                if boxes[a].overlaps(boxes[b]):
                    raise ValueError(f"boxes {a} and {b} overlap")

    def component_boxes(self) -> dict[str, RegionBox]:
        return {
            "leye": self.leye,
            "reye": self.reye,
            "nose": self.nose,
            "mouth": self.mouth,
        }

    def region_mask(self, name: str) -> torch.Tensor:
        """Boolean (canvas, canvas) membership mask for one region."""
        if name == "face":
            mask = torch.ones(self.canvas, self.canvas, dtype=torch.bool)
            for box in self.component_boxes().values():
                mask[box.y0 : box.y1, box.x0 : box.x1] = False
            return mask
        box = self.component_boxes().get(name)
        if box is None:
            raise KeyError(f"unknown region {name!r}")
        mask = torch.zeros(self.canvas, self.canvas, dtype=torch.bool)
        mask[box.y0 : box.y1, box.x0 : box.x1] = True
        return mask

    def membership_counts(self) -> torch.Tensor:
        """Per-pixel count of covering regions; all-ones iff a valid partition."""
        total = torch.zeros(self.canvas, self.canvas, dtype=torch.int64)
        for name in REGION_NAMES:
            total += self.region_mask(name).to(torch.int64)
        return total

    def scaled(self, new_canvas: int) -> "RegionLayout":
        factor = new_canvas / self.canvas
        return RegionLayout(
            canvas=new_canvas,
            **{n: b.scaled(factor) for n, b in self.component_boxes().items()},
        )

    def to_dict(self) -> dict:
        return {
            "canvas": self.canvas,
            **{
                name: [box.x0, box.y0, box.x1, box.y1]
                for name, box in self.component_boxes().items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionLayout":
        return cls(
            canvas=int(d["canvas"]),
            **{name: RegionBox(*d[name]) for name in COMPONENT_NAMES},
        )


def default_layout(canvas: int = 256) -> RegionLayout:
    """Component windows for aligned 256x256 face crops, rescaled on request.

    Eye boxes sit symmetrically about the vertical midline; the nose box stops
    where the mouth box starts so the half-open rectangles stay disjoint.
    """
    base = RegionLayout(
        canvas=256,
        leye=RegionBox(52, 78, 116, 142),
        reye=RegionBox(140, 78, 204, 142),
        nose=RegionBox(100, 146, 156, 186),
        mouth=RegionBox(84, 186, 172, 238),
    )
    return base if canvas == 256 else base.scaled(canvas)


def crop_regions(sketch: torch.Tensor, layout: RegionLayout) -> dict[str, torch.Tensor]:
    """Split a (1, canvas, canvas) sketch into its five region patches.

    Component patches are rectangle crops; the ``face`` patch keeps the full
    canvas with the four boxes zeroed.  :func:`assemble_regions` inverts the
    split exactly.
    """
    _check_canvas(sketch, layout)
    patches: dict[str, torch.Tensor] = {}
    for name, box in layout.component_boxes().items():
        patches[name] = sketch[:, box.y0 : box.y1, box.x0 : box.x1].clone()
    face = sketch.clone()
    for box in layout.component_boxes().values():
        face[:, box.y0 : box.y1, box.x0 : box.x1] = 0.0
    patches["face"] = face
    return patches


def embed_region(patch: torch.Tensor, name: str, layout: RegionLayout) -> torch.Tensor:
    """Place a region patch back onto a blank canvas at its box position."""
    if name == "face":
        if patch.shape[-2:] != (layout.canvas, layout.canvas):
            raise ValueError(f"face patch shape {tuple(patch.shape)} != canvas")
        return patch * layout.region_mask("face").to(patch.dtype)
    box = layout.component_boxes()[name]
    if patch.shape[-2:] != (box.height, box.width):
        raise ValueError(f"patch shape {tuple(patch.shape)} != box {name} {box}")
    canvas = torch.zeros(patch.shape[:-2] + (layout.canvas, layout.canvas), dtype=patch.dtype)
    canvas[..., box.y0 : box.y1, box.x0 : box.x1] = patch
    return canvas


def assemble_regions(patches: dict[str, torch.Tensor], layout: RegionLayout) -> torch.Tensor:
    """Sum of the five re-embedded patches; inverse of :func:`crop_regions`."""
    missing = set(REGION_NAMES) - set(patches)
    if missing:
        raise ValueError(f"missing region patches: {sorted(missing)}")
    total = torch.zeros_like(patches["face"])
    for name in REGION_NAMES:
        total = total + embed_region(patches[name], name, layout)
    return total


def _check_canvas(sketch: torch.Tensor, layout: RegionLayout) -> None:
    if sketch.dim() != 3 or sketch.shape[0] != 1:
        raise ValueError(f"sketch must be (1, H, W), got {tuple(sketch.shape)}")
    if sketch.shape[1] != layout.canvas or sketch.shape[2] != layout.canvas:
        raise ValueError(
            f"sketch canvas {tuple(sketch.shape[1:])} != layout canvas {layout.canvas}"
        )
