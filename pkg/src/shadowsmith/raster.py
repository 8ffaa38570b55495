"""Grayscale raster handling.

Rasters are plain 2-D numpy arrays of dtype uint8 or uint16; the dtype
carries the bit depth (8 or 16). On disk they are grayscale PNGs, which
round-trip losslessly at both depths.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import DatasetError

RASTER_DTYPES = (np.uint8, np.uint16)


def level_count(raster: np.ndarray) -> int:
    """Number of intensity levels for the raster's bit depth (256 or 65536)."""
    return int(np.iinfo(raster.dtype).max) + 1


def as_raster(data, depth: int = 8) -> np.ndarray:
    """Coerce array-like intensity data to a validated 2-D raster.

    Values must already lie in [0, 2^depth - 1]; out-of-range input is an
    error rather than silently clipped.
    """
    if depth not in (8, 16):
        raise DatasetError(f"unsupported bit depth {depth}, expected 8 or 16")
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise DatasetError(f"raster must be 2-D, got shape {arr.shape}")
    dtype = np.uint8 if depth == 8 else np.uint16
    if arr.dtype != dtype:
        hi = (1 << depth) - 1
        if arr.size and (arr.min() < 0 or arr.max() > hi):
            raise DatasetError(f"raster values outside [0, {hi}]")
        arr = arr.astype(dtype)
    return arr


def read_png(path) -> np.ndarray:
    """Read an 8- or 16-bit grayscale PNG. Multi-channel images are rejected."""
    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode == "L":
                return np.asarray(im, dtype=np.uint8)
            if mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im)
                if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
                    raise DatasetError(f"{path}: 16-bit raster values out of range")
                return arr.astype(np.uint16)
            raise DatasetError(
                f"{path}: unsupported image mode {mode!r}; single-channel "
                "grayscale (8- or 16-bit) required"
            )
    except FileNotFoundError as exc:
        raise DatasetError(f"image file not found: {path}") from exc


def write_png(raster: np.ndarray, path) -> None:
    """Write a raster as a grayscale PNG (depth follows the dtype)."""
    if raster.dtype not in RASTER_DTYPES:
        raise DatasetError(f"raster dtype must be uint8 or uint16, got {raster.dtype}")
    Image.fromarray(raster).save(path, format="PNG")
