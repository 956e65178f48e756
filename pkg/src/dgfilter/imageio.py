"""8-bit RGB PNG input/output and the byte <-> [-1, 1] pixel mapping."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def read_rgb(path) -> np.ndarray:
    """Read any Pillow-readable image as an ``H x W x 3`` uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_png(path, rgb: np.ndarray):
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"write_png expects H x W x 3 uint8, got {rgb.dtype} {rgb.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rgb).save(path, format="PNG")


def bytes_to_unit(rgb: np.ndarray) -> np.ndarray:
    """``H x W x 3`` uint8 -> ``3 x H x W`` float32 with ``v = byte/127.5 - 1``."""
    return (np.asarray(rgb, dtype=np.float32).transpose(2, 0, 1) / np.float32(127.5) - np.float32(1.0))


def unit_to_bytes(chw: np.ndarray) -> np.ndarray:
    """``3 x H x W`` floats in [-1, 1] -> ``H x W x 3`` uint8, rounding and clamping."""
    v = np.round((np.asarray(chw, dtype=np.float64) + 1.0) * 127.5)
    return np.clip(v, 0, 255).astype(np.uint8).transpose(1, 2, 0).copy()


def quantize(chw: np.ndarray) -> np.ndarray:
    """Round-trip through 8-bit bytes."""
    return bytes_to_unit(unit_to_bytes(chw))


def list_images(directory) -> list:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
