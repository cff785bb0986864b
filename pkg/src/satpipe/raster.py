"""8-bit raster images: the unit every transform acts on.

A :class:`RasterImage` wraps a ``(height, width, channels)`` uint8 numpy
array in row-major order. Single-channel data is still stored with an
explicit channel axis so every transform can treat channels uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class RasterError(ValueError):
    """Raised for malformed raster data or undecodable image files."""


@dataclass
class RasterImage:
    """Decoded 8-bit multi-channel raster.

    ``pixels`` has shape (height, width, channels) and dtype uint8.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise RasterError(f"pixels must be uint8, got {px.dtype}")
        if px.ndim == 2:
            px = px[:, :, np.newaxis]
        if px.ndim != 3:
            raise RasterError(f"pixels must be 2-D or 3-D, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1 or px.shape[2] < 1:
            raise RasterError(f"degenerate image shape {px.shape}")
        self.pixels = np.ascontiguousarray(px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def copy(self) -> "RasterImage":
        return RasterImage(self.pixels.copy())

    def same_pixels(self, other: "RasterImage") -> bool:
        return (
            self.pixels.shape == other.pixels.shape
            and bool(np.array_equal(self.pixels, other.pixels))
        )

    @classmethod
    def full(cls, width: int, height: int, channels: int = 3, value: int = 0) -> "RasterImage":
        return cls(np.full((height, width, channels), value, dtype=np.uint8))


def read_image(path: str | Path) -> RasterImage:
    """Decode a PNG or JPEG file into a RasterImage.

    Palette and grayscale files are expanded to their natural channel count
    (RGB for palette, 1 channel for grayscale).
    """
    try:
        with Image.open(path) as im:
            if im.mode in ("P", "CMYK", "RGBA"):
                im = im.convert("RGB")
            arr = np.asarray(im)
    except Exception as exc:
        raise RasterError(f"cannot decode image {path}: {exc}") from exc
    if arr.dtype != np.uint8:
        arr = np.clip(arr, 0, 255).astype(np.uint8)
    return RasterImage(arr)


def write_png(image: RasterImage, path: str | Path) -> None:
    """Write a RasterImage as PNG. Output bytes are deterministic for fixed pixels."""
    arr = image.pixels
    if arr.shape[2] == 1:
        pil = Image.fromarray(arr[:, :, 0], mode="L")
    elif arr.shape[2] == 3:
        pil = Image.fromarray(arr, mode="RGB")
    elif arr.shape[2] == 4:
        pil = Image.fromarray(arr, mode="RGBA")
    else:
        raise RasterError(f"cannot encode {arr.shape[2]}-channel image as PNG")
    pil.save(path, format="PNG")
