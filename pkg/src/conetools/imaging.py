"""Watermark border cropping and static annotation rendering."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np
from PIL import Image, ImageDraw

from .core import AnnotatedImage, ConeClass, ContractError, LabeledObject

WATERMARK_BORDER = 140

CLASS_COLORS: dict[ConeClass, tuple[int, int, int]] = {
    ConeClass.BLUE: (0, 0, 255),
    ConeClass.YELLOW: (255, 255, 0),
    ConeClass.SMALL_ORANGE: (255, 140, 0),
    ConeClass.LARGE_ORANGE: (200, 80, 0),
    ConeClass.OTHER: (128, 128, 128),
}


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB pixels, shape ``(height, width, 3)``."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ContractError(f"expected (H, W, 3) uint8 pixels, got {p.shape} {p.dtype}")
        object.__setattr__(self, "pixels", p)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def open(cls, path: Union[str, Path]) -> "RasterImage":
        with Image.open(path) as im:
            return cls(np.array(im.convert("RGB")))

    def save(self, path: Union[str, Path]) -> None:
        Image.fromarray(self.pixels, "RGB").save(path)


def crop_watermark(img: RasterImage, border: int = WATERMARK_BORDER) -> RasterImage:
    """Remove ``border`` pixels from every side."""
    if border < 0:
        raise ContractError("border must be non-negative")
    if img.width <= 2 * border or img.height <= 2 * border:
        raise ContractError(
            f"image {img.width}x{img.height} too small for a {border} px border; "
            f"need at least {2 * border + 1}x{2 * border + 1}"
        )
    return RasterImage(img.pixels[border : img.height - border, border : img.width - border].copy())


@dataclass
class CroppedAnnotation:
    image: AnnotatedImage
    dropped: int = 0
    clipped: list[int] = field(default_factory=list)


def crop_annotation(ann: AnnotatedImage, border: int = WATERMARK_BORDER) -> CroppedAnnotation:
    """Shift annotations into cropped coordinates.

    Boxes are translated by ``(-border, -border)`` and clipped to the interior;
    ``clipped`` lists indices (in the output) of objects that were cut, and
    objects lying fully outside the interior are dropped and counted.
    """
    w, h = ann.width - 2 * border, ann.height - 2 * border
    if w <= 0 or h <= 0:
        raise ContractError(f"annotation frame {ann.width}x{ann.height} too small for a {border} px border")
    kept: list[LabeledObject] = []
    clipped, dropped = [], 0
    for obj in ann.objects:
        moved = obj.box.translate(-border, -border)
        if not moved.intersects(w, h):
            dropped += 1
            continue
        box = moved.clip(w, h)
        mask = obj.mask.translate(-border, -border).clip(w, h) if obj.mask is not None else None
        if box != moved:
            clipped.append(len(kept))
        kept.append(LabeledObject(obj.cls, box, mask, obj.tags, obj.source_label))
    out = AnnotatedImage(ann.name, w, h, tuple(kept), dict(ann.scene_meta))
    return CroppedAnnotation(out, dropped, clipped)


def _px(v: float) -> int:
    return int(np.floor(v + 0.5))


def _outline_mask(h: int, w: int, box, thickness: int) -> np.ndarray:
    """Pixels of a rectangle outline drawn inward from the box edges."""
    x0, y0 = max(_px(box.x_min), 0), max(_px(box.y_min), 0)
    x1, y1 = min(_px(box.x_max), w), min(_px(box.y_max), h)
    m = np.zeros((h, w), dtype=bool)
    if x1 <= x0 or y1 <= y0:
        return m
    m[y0:y1, x0:x1] = True
    t = thickness
    m[y0 + t : y1 - t, x0 + t : x1 - t] = False
    return m


def _polygon_mask(h: int, w: int, mask) -> np.ndarray:
    canvas = Image.new("1", (w, h), 0)
    draw = ImageDraw.Draw(canvas)
    draw.polygon(list(mask.exterior), fill=1)
    for hole in mask.holes:
        if len(hole) >= 3:
            draw.polygon(list(hole), fill=0)
    return np.array(canvas, dtype=bool)


def render_annotations(
    img: RasterImage,
    ann: AnnotatedImage,
    thickness: int = 2,
    alpha: float = 0.4,
    colors: Optional[Mapping[ConeClass, tuple[int, int, int]]] = None,
) -> RasterImage:
    """Draw masks as translucent fills, then box outlines, in object order."""
    if (img.width, img.height) != (ann.width, ann.height):
        raise ContractError(
            f"annotation is {ann.width}x{ann.height} but image is {img.width}x{img.height}"
        )
    colors = {**CLASS_COLORS, **(colors or {})}
    out = img.pixels.astype(np.int32)
    h, w = img.height, img.width
    for obj in ann.objects:
        if obj.mask is not None:
            sel = _polygon_mask(h, w, obj.mask)
            col = np.array(colors[obj.cls], dtype=np.float64)
            out[sel] = np.floor(out[sel] * (1 - alpha) + col * alpha + 0.5).astype(np.int32)
    for obj in ann.objects:
        out[_outline_mask(h, w, obj.box, thickness)] = colors[obj.cls]
    return RasterImage(out.astype(np.uint8))
