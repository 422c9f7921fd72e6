"""Mosaic and Mixup as seedable geometric transforms on annotated images.

Pixel grids are optional; box bookkeeping is the contract. Mosaic places
four W x H sources in the quadrants of a 2W x 2H canvas split at a center
point, translating and clipping boxes and dropping slivers below
min_box_area. Mixup blends pixels by a convex weight and takes the plain
union of both box lists. Optional pixel fixtures round-trip as binary
PGM (P5) / PPM (P6).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import InputError
from .geometry import BBox

LabeledBox = tuple[BBox, Any]


@dataclass(frozen=True)
class AnnotatedImage:
    width: int
    height: int
    boxes: tuple[LabeledBox, ...] = ()
    pixels: np.ndarray | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InputError(f"image dimensions must be positive, got {self.width}x{self.height}")
        for box, _ in self.boxes:
            if box.x < 0 or box.y < 0 or box.x2 > self.width or box.y2 > self.height:
                raise InputError(f"box {box} exceeds image bounds {self.width}x{self.height}")
        if self.pixels is not None:
            shape = self.pixels.shape
            if shape[:2] != (self.height, self.width):
                raise InputError(
                    f"pixel grid {shape} does not match {self.height}x{self.width}"
                )


@dataclass(frozen=True)
class MosaicConfig:
    center: tuple[float, float] | None = None  # drawn from the seed when None
    min_box_area: float = 4.0


@dataclass(frozen=True)
class MixupConfig:
    fixed_lambda: float | None = None  # beta(32, 32) draw when None
    apply_probability: float = 0.24

    def __post_init__(self):
        if self.fixed_lambda is not None and not 0.0 <= self.fixed_lambda <= 1.0:
            raise InputError(f"lambda must be in [0, 1], got {self.fixed_lambda}")
        if not 0.0 <= self.apply_probability <= 1.0:
            raise InputError(f"probability must be in [0, 1], got {self.apply_probability}")


def _clip_box_to(box: BBox, x1: float, y1: float, x2: float, y2: float) -> BBox | None:
    nx1 = max(box.x, x1)
    ny1 = max(box.y, y1)
    nx2 = min(box.x2, x2)
    ny2 = min(box.y2, y2)
    if nx2 <= nx1 or ny2 <= ny1:
        return None
    return BBox(nx1, ny1, nx2 - nx1, ny2 - ny1)


def mosaic(imgs: Sequence[AnnotatedImage], cfg: MosaicConfig, seed: int) -> AnnotatedImage:
    """Compose four equally sized images on a 2W x 2H canvas.

    The split center falls in [0.5W, 1.5W] x [0.5H, 1.5H]. Each source is
    pinned with the corner facing the center at the center point (the
    top-left source's bottom-right corner, and so on), cropped to its
    quadrant; boxes translate with their source, clip to the quadrant, and
    are dropped when the clipped area falls below min_box_area.
    """
    if len(imgs) != 4:
        raise InputError(f"mosaic needs exactly 4 images, got {len(imgs)}")
    w, h = imgs[0].width, imgs[0].height
    if any(im.width != w or im.height != h for im in imgs):
        raise InputError("mosaic inputs must share one nominal size")

    if cfg.center is not None:
        cx, cy = cfg.center
    else:
        rng = np.random.default_rng(seed)
        cx = float(rng.uniform(0.5 * w, 1.5 * w))
        cy = float(rng.uniform(0.5 * h, 1.5 * h))
    if not (0.5 * w <= cx <= 1.5 * w and 0.5 * h <= cy <= 1.5 * h):
        raise InputError(f"center ({cx}, {cy}) outside [{0.5*w}, {1.5*w}]x[{0.5*h}, {1.5*h}]")

    cw, ch = 2 * w, 2 * h
    # (source origin on the canvas, quadrant rectangle)
    placements = [
        ((cx - w, cy - h), (0.0, 0.0, cx, cy)),  # top-left
        ((cx, cy - h), (cx, 0.0, float(cw), cy)),  # top-right
        ((cx - w, cy), (0.0, cy, cx, float(ch))),  # bottom-left
        ((cx, cy), (cx, cy, float(cw), float(ch))),  # bottom-right
    ]

    boxes: list[LabeledBox] = []
    for img, ((ox, oy), quad) in zip(imgs, placements):
        for box, label in img.boxes:
            moved = box.translated(ox, oy)
            clipped = _clip_box_to(moved, *quad)
            if clipped is None or clipped.w * clipped.h < cfg.min_box_area:
                continue
            boxes.append((clipped, label))

    pixels = None
    if all(im.pixels is not None for im in imgs):
        shape = (ch, cw) + imgs[0].pixels.shape[2:]
        pixels = np.zeros(shape, dtype=imgs[0].pixels.dtype)
        for img, ((ox, oy), quad) in zip(imgs, placements):
            qx1, qy1, qx2, qy2 = (int(round(v)) for v in quad)
            iox, ioy = int(round(ox)), int(round(oy))
            sx1 = max(qx1, iox) - iox
            sy1 = max(qy1, ioy) - ioy
            sx2 = min(qx2, iox + w) - iox
            sy2 = min(qy2, ioy + h) - ioy
            if sx2 <= sx1 or sy2 <= sy1:
                continue
            pixels[ioy + sy1 : ioy + sy2, iox + sx1 : iox + sx2] = img.pixels[
                sy1:sy2, sx1:sx2
            ]

    return AnnotatedImage(width=cw, height=ch, boxes=tuple(boxes), pixels=pixels)


def draw_mixup_lambda(cfg: MixupConfig, seed: int) -> float:
    if cfg.fixed_lambda is not None:
        return cfg.fixed_lambda
    return float(np.random.default_rng(seed).beta(32.0, 32.0))


def mixup(a: AnnotatedImage, b: AnnotatedImage, cfg: MixupConfig, seed: int) -> AnnotatedImage:
    """Blend pixels by lambda and union the box lists (labels unweighted)."""
    if (a.width, a.height) != (b.width, b.height):
        raise InputError(
            f"mixup needs equal dimensions, got {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    lam = draw_mixup_lambda(cfg, seed)
    pixels = None
    if a.pixels is not None and b.pixels is not None:
        pixels = lam * a.pixels.astype(np.float64) + (1.0 - lam) * b.pixels.astype(np.float64)
    return AnnotatedImage(
        width=a.width, height=a.height, boxes=a.boxes + b.boxes, pixels=pixels
    )


def gate(probability: float, seed: int, trial_index: int) -> bool:
    """Deterministic per-trial coin flip with the given bias.

    Each (seed, trial_index) pair hashes to an independent uniform draw
    via numpy's SeedSequence, so outcomes are addressable and stable.
    """
    if not 0.0 <= probability <= 1.0:
        raise InputError(f"probability must be in [0, 1], got {probability}")
    w = np.random.SeedSequence([seed, trial_index]).generate_state(2)
    u = ((int(w[0]) >> 5) * (1 << 26) + (int(w[1]) >> 6)) / float(1 << 53)
    return u < probability


def write_pnm(path, pixels: np.ndarray) -> None:
    """Write a gray (h, w) grid as binary PGM or an (h, w, 3) grid as PPM."""
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr), 0, 255).astype(np.uint8)
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise InputError(f"unsupported pixel grid shape {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n" + f"{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_pnm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        magic, rest = data.split(b"\n", 1)
        dims, rest = rest.split(b"\n", 1)
        maxval, raster = rest.split(b"\n", 1)
        w, h = (int(v) for v in dims.split())
        if int(maxval) != 255:
            raise InputError(f"only 8-bit PNM supported, maxval={int(maxval)}")
    except ValueError as exc:
        raise InputError(f"malformed PNM header in {path}") from exc
    if magic == b"P5":
        shape: tuple[int, ...] = (h, w)
    elif magic == b"P6":
        shape = (h, w, 3)
    else:
        raise InputError(f"unsupported PNM magic {magic!r}")
    count = int(np.prod(shape))
    if len(raster) < count:
        raise InputError(f"truncated PNM raster in {path}")
    return np.frombuffer(raster[:count], dtype=np.uint8).reshape(shape).copy()
