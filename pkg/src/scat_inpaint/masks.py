"""Free-form hole masks and the corrupt/compose image algebra.

Convention used everywhere in this package: a mask is a float32 array of
shape (H, W) with values in {0, 1}, where 1 marks a valid (kept) pixel and
0 marks a hole. On disk masks are 8-bit grayscale PNGs with 255 = valid.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import os
from typing import Optional, Sequence

import cv2
import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError, DomainError, FormatError

MASK_VALID = 1.0
MASK_HOLE = 0.0


@dataclasses.dataclass(frozen=True)
class BrushParams:
    """Stroke statistics for free-form hole drawing.

    Lengths and widths are fractions of min(H, W) so the same brush keeps a
    comparable coverage distribution at 64 or 256 pixels. Defaults were
    calibrated so that 1000 seeded 256x256 draws all land in (0, 0.6].
    """

    num_strokes: tuple[int, int] = (1, 5)
    num_vertices: tuple[int, int] = (4, 12)
    width_frac: tuple[float, float] = (0.03, 0.13)
    segment_frac: tuple[float, float] = (0.06, 0.30)
    angle_jitter: float = 1.2
    num_rects: tuple[int, int] = (0, 2)
    rect_frac: tuple[float, float] = (0.08, 0.30)

    def __post_init__(self):
        for name in ("num_strokes", "num_vertices", "num_rects"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ConfigurationError(f"brush {name} range ({lo}, {hi}) is invalid")
        for name in ("width_frac", "segment_frac", "rect_frac"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi < lo or hi > 1:
                raise ConfigurationError(f"brush {name} range ({lo}, {hi}) is invalid")
        if self.angle_jitter < 0:
            raise ConfigurationError("brush angle_jitter must be >= 0")


class MaskBucket(enum.Enum):
    B0_20 = "B0_20"
    B20_40 = "B20_40"
    B40_60 = "B40_60"
    OUT_OF_RANGE = "OUT_OF_RANGE"


def bucket_for_ratio(ratio: float) -> MaskBucket:
    """Bucket a hole ratio: [0, 0.2), [0.2, 0.4), [0.4, 0.6], above."""
    if not math.isfinite(ratio) or ratio < 0.0 or ratio > 1.0:
        raise DomainError(f"mask ratio {ratio!r} outside [0, 1]")
    if ratio < 0.2:
        return MaskBucket.B0_20
    if ratio < 0.4:
        return MaskBucket.B20_40
    if ratio <= 0.6:
        return MaskBucket.B40_60
    return MaskBucket.OUT_OF_RANGE


def _check_mask(m: np.ndarray):
    if not isinstance(m, np.ndarray) or m.ndim != 2:
        raise DomainError(f"mask must be a 2d array, got {getattr(m, 'shape', type(m))}")
    bad = (m != 0) & (m != 1)
    if bad.any():
        raise DomainError("mask contains values other than 0 and 1")


def mask_ratio(m: np.ndarray) -> float:
    """Fraction of hole (zero) pixels."""
    _check_mask(m)
    return float(np.count_nonzero(m == 0) / m.size)


def ones_mask(height: int, width: int) -> np.ndarray:
    if height <= 0 or width <= 0:
        raise ConfigurationError(f"mask size {height}x{width} is invalid")
    return np.ones((height, width), dtype=np.float32)


def generate_freeform_mask(
    height: int,
    width: int,
    seed: int,
    brush: Optional[BrushParams] = None,
) -> np.ndarray:
    """Draw random thick polylines and rectangles as holes.

    Deterministic for a given (height, width, seed, brush). A brush with
    zero strokes and zero rectangles yields the all-valid mask.
    """
    if height <= 0 or width <= 0:
        raise ConfigurationError(f"mask size {height}x{width} is invalid")
    brush = brush or BrushParams()
    rng = np.random.default_rng(seed)
    scale = min(height, width)
    holes = np.zeros((height, width), dtype=np.uint8)

    def _randint(lo_hi):
        lo, hi = lo_hi
        return int(rng.integers(lo, hi + 1))

    def _px(frac_range, at_least=1):
        lo, hi = frac_range
        return max(at_least, int(round(rng.uniform(lo, hi) * scale)))

    for _ in range(_randint(brush.num_strokes)):
        x = int(rng.integers(0, width))
        y = int(rng.integers(0, height))
        angle = rng.uniform(0, 2 * math.pi)
        for _ in range(_randint(brush.num_vertices)):
            angle += rng.uniform(-brush.angle_jitter, brush.angle_jitter)
            length = _px(brush.segment_frac)
            thickness = _px(brush.width_frac)
            nx = int(np.clip(x + length * math.cos(angle), 0, width - 1))
            ny = int(np.clip(y + length * math.sin(angle), 0, height - 1))
            cv2.line(holes, (x, y), (nx, ny), 1, thickness=thickness)
            cv2.circle(holes, (nx, ny), thickness // 2, 1, -1)
            x, y = nx, ny

    for _ in range(_randint(brush.num_rects)):
        rw = _px(brush.rect_frac)
        rh = _px(brush.rect_frac)
        x0 = int(rng.integers(0, max(1, width - rw)))
        y0 = int(rng.integers(0, max(1, height - rh)))
        cv2.rectangle(holes, (x0, y0), (x0 + rw, y0 + rh), 1, -1)

    return (1 - holes).astype(np.float32)


def save_mask(m: np.ndarray, path: str):
    """Write a mask PNG: 8-bit grayscale, 255 = valid, 0 = hole."""
    _check_mask(m)
    img = Image.fromarray((m * 255).astype(np.uint8), mode="L")
    img.save(path, format="PNG")


def load_mask(path: str, invert: bool = False) -> np.ndarray:
    """Read a mask PNG. Pixels >= 128 are valid unless `invert` flips it."""
    if not os.path.isfile(path):
        raise FormatError(f"mask file not found: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"unreadable mask file: {path} ({exc})") from exc
    if img.mode != "L":
        raise FormatError(
            f"mask file {path} must be 8-bit grayscale, got mode {img.mode!r}"
        )
    arr = np.asarray(img)
    valid = arr >= 128
    if invert:
        valid = ~valid
    return valid.astype(np.float32)


def _check_pair(x, m):
    if x.shape[-2:] != m.shape[-2:]:
        raise DomainError(
            f"image spatial shape {tuple(x.shape[-2:])} does not match "
            f"mask {tuple(m.shape[-2:])}"
        )


def corrupt(x, m):
    """x_tilde = x * m. Holes become exact zeros."""
    _check_pair(x, m)
    return x * m


def compose(x_hat, x_tilde, m):
    """x_bar: model output in the holes, untouched input elsewhere.

    With a binary m this is bit-exact: valid pixels are x_tilde values,
    hole pixels are x_hat values.
    """
    if x_hat.shape != x_tilde.shape:
        raise DomainError(
            f"compose inputs disagree: {tuple(x_hat.shape)} vs {tuple(x_tilde.shape)}"
        )
    _check_pair(x_hat, m)
    return (1 - m) * x_hat + m * x_tilde


@dataclasses.dataclass
class ImageTriple:
    """The per-step image algebra: source, corrupted, raw output, composite."""

    x: "np.ndarray | object"
    x_tilde: "np.ndarray | object"
    x_hat: "np.ndarray | object"
    x_bar: "np.ndarray | object"


def make_triple(x, x_hat, m) -> ImageTriple:
    x_tilde = corrupt(x, m)
    return ImageTriple(x=x, x_tilde=x_tilde, x_hat=x_hat, x_bar=compose(x_hat, x_tilde, m))


def write_manifest(masks: Sequence[str], ratios: Sequence[float], path: str):
    import json

    entries = [
        {"file": os.path.basename(f), "ratio": round(float(r), 6)}
        for f, r in zip(masks, ratios)
    ]
    with open(path, "w") as fh:
        json.dump({"masks": entries}, fh, indent=2)
        fh.write("\n")
