"""Image IO and a tiny synthetic texture corpus for smoke training.

Images are channel-first float arrays. Two ranges are used: [0,1] ("unit")
for metrics and files, [-1,1] ("signed") inside the networks.
"""

from __future__ import annotations

import os

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError, FormatError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


def load_unit_image(path: str) -> np.ndarray:
    """Read an image file as float64 (3, H, W) in [0, 1]."""
    if not os.path.isfile(path):
        raise FormatError(f"image file not found: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"unreadable image file: {path} ({exc})") from exc
    arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def save_unit_image(img: np.ndarray, path: str):
    """Write a (3, H, W) [0,1] array as an 8-bit RGB PNG."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise FormatError(f"expected (3, H, W) image, got {img.shape}")
    arr = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def unit_to_signed(x):
    return x * 2.0 - 1.0


def signed_to_unit(x):
    return (x + 1.0) / 2.0


def quantize_unit(img: np.ndarray) -> np.ndarray:
    """Round a [0,1] image through 8-bit, the exact PNG representation."""
    return np.clip(np.rint(img * 255.0), 0, 255) / 255.0


def list_images(directory: str) -> list[str]:
    if not os.path.isdir(directory):
        raise ConfigurationError(f"not a directory: {directory}")
    names = sorted(
        f
        for f in os.listdir(directory)
        if f.lower().endswith(IMAGE_EXTENSIONS)
    )
    return [os.path.join(directory, f) for f in names]


def synthetic_textures(count: int, size: int, seed: int) -> np.ndarray:
    """Smooth colored gratings plus low-frequency blobs, in [-1, 1].

    Shape (count, 3, size, size), float32. Deterministic per seed.
    """
    if count < 1 or size < 8:
        raise ConfigurationError("need count >= 1 and size >= 8")
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(
        np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij"
    )
    out = np.zeros((count, 3, size, size), dtype=np.float32)
    for i in range(count):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(2.0, 6.0)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(
            2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase
        )
        blob = np.sin(2 * np.pi * rng.uniform(0.5, 1.5) * xx + rng.uniform(0, 6)) * np.sin(
            2 * np.pi * rng.uniform(0.5, 1.5) * yy + rng.uniform(0, 6)
        )
        color = rng.uniform(0.3, 1.0, size=3)
        base = rng.uniform(-0.3, 0.3, size=3)
        for c in range(3):
            out[i, c] = np.clip(
                base[c] + color[c] * (0.6 * wave + 0.4 * blob), -1.0, 1.0
            )
    return out


class ImageFolder(torch.utils.data.Dataset):
    """Folder of images resized/cropped to a square, emitted in [-1, 1]."""

    def __init__(self, directory: str, image_size: int):
        self.paths = list_images(directory)
        if not self.paths:
            raise ConfigurationError(f"no images found in {directory}")
        self.image_size = image_size

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, idx: int) -> torch.Tensor:
        img = Image.open(self.paths[idx]).convert("RGB")
        s = self.image_size
        if img.size != (s, s):
            short = min(img.size)
            scale = s / short
            img = img.resize(
                (max(s, round(img.size[0] * scale)), max(s, round(img.size[1] * scale))),
                Image.BILINEAR,
            )
            left = (img.size[0] - s) // 2
            top = (img.size[1] - s) // 2
            img = img.crop((left, top, left + s, top + s))
        arr = np.asarray(img, dtype=np.float32).transpose(2, 0, 1) / 255.0
        return torch.from_numpy(arr * 2.0 - 1.0)
