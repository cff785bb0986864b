"""Deterministic raster transforms: rotate, flip, zoom, channel noise, blur,
rescale, and GSD normalization.

Conventions, fixed so independent implementations can reproduce outputs:

* Bilinear sampling uses the half-pixel mapping ``src = (dst + 0.5) * (src_dim
  / dst_dim) - 0.5``. Rescale and zoom clamp sample coordinates to the edge;
  non-right-angle rotation treats out-of-image neighbors as value 0.
* Rotation is clockwise. 90 and 180 degrees are exact pixel permutations
  (dimensions swap for 90); 15/30/45 rotate about the canvas center onto a
  same-sized canvas with zero fill.
* Gaussian blur is separable with kernel radius ``ceil(3 * sigma)`` and
  clamp-to-edge handling.
* Channel noise draws one integer offset per channel, channel-major, from a
  splitmix64 stream seeded by the per-call seed: ``offset = rng.randint(-a,
  +a)`` (see :mod:`satpipe.rng` for the exact stream).
* Fractional output dimensions round half up: ``floor(x + 0.5)``.

All transforms return new uint8 images and never mutate their input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import gsd_scale_factor
from .raster import RasterImage
from .rng import SplitMix64

ROTATION_DEGREES = (15, 30, 45, 90, 180)
FLIP_AXES = ("east_west", "north_south")
ZOOM_MIN = 1.0 / 1.5
ZOOM_MAX = 1.5
NOISE_MAX_AMPLITUDE = 64


class TransformError(ValueError):
    """Raised for parameters outside a transform's domain."""


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class TransformSpec:
    """Declarative description of one deterministic raster transform.

    ``kind`` is one of rotate, flip, zoom, channel_noise, blur, rescale;
    only the fields that kind uses are set.
    """

    kind: str
    degrees: int | None = None
    axis: str | None = None
    factor: float | None = None
    amplitude: int | None = None
    seed: int | None = None
    sigma: float | None = None
    width: int | None = None
    height: int | None = None

    def __post_init__(self):
        if self.kind == "rotate":
            if self.degrees not in ROTATION_DEGREES:
                raise TransformError(f"unsupported rotation {self.degrees}")
        elif self.kind == "flip":
            if self.axis not in FLIP_AXES:
                raise TransformError(f"unsupported flip axis {self.axis!r}")
        elif self.kind == "zoom":
            if self.factor is None or not (ZOOM_MIN <= self.factor <= ZOOM_MAX):
                raise TransformError(
                    f"zoom factor must lie in [{ZOOM_MIN:.4f}, {ZOOM_MAX}], got {self.factor}"
                )
        elif self.kind == "channel_noise":
            if (
                self.amplitude is None
                or not 0 <= self.amplitude <= NOISE_MAX_AMPLITUDE
            ):
                raise TransformError(
                    f"noise amplitude must lie in [0, {NOISE_MAX_AMPLITUDE}], got {self.amplitude}"
                )
            if self.seed is None:
                raise TransformError("channel_noise requires a seed")
        elif self.kind == "blur":
            if self.sigma is None or self.sigma <= 0:
                raise TransformError(f"blur sigma must be positive, got {self.sigma}")
        elif self.kind == "rescale":
            if self.width is None or self.height is None or self.width < 1 or self.height < 1:
                raise TransformError(
                    f"rescale target must be >= 1x1, got {self.width}x{self.height}"
                )
        else:
            raise TransformError(f"unknown transform kind {self.kind!r}")

    @classmethod
    def rotate(cls, degrees: int) -> "TransformSpec":
        return cls(kind="rotate", degrees=degrees)

    @classmethod
    def flip(cls, axis: str) -> "TransformSpec":
        return cls(kind="flip", axis=axis)

    @classmethod
    def zoom(cls, factor: float) -> "TransformSpec":
        return cls(kind="zoom", factor=factor)

    @classmethod
    def channel_noise(cls, amplitude: int, seed: int) -> "TransformSpec":
        return cls(kind="channel_noise", amplitude=amplitude, seed=seed)

    @classmethod
    def blur(cls, sigma: float) -> "TransformSpec":
        return cls(kind="blur", sigma=sigma)

    @classmethod
    def rescale(cls, width: int, height: int) -> "TransformSpec":
        return cls(kind="rescale", width=width, height=height)

    def apply(self, image: RasterImage) -> RasterImage:
        if self.kind == "rotate":
            return rotate(image, self.degrees)
        if self.kind == "flip":
            return flip(image, self.axis)
        if self.kind == "zoom":
            return zoom(image, self.factor)
        if self.kind == "channel_noise":
            return channel_noise(image, self.amplitude, self.seed)
        if self.kind == "blur":
            return blur(image, self.sigma)
        if self.kind == "rescale":
            return rescale(image, self.width, self.height)
        raise TransformError(f"unknown transform kind {self.kind!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for field in ("degrees", "axis", "factor", "amplitude", "seed", "sigma", "width", "height"):
            value = getattr(self, field)
            if value is not None:
                out[field] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TransformSpec":
        return cls(**data)


def apply_pipeline(image: RasterImage, pipeline: list[TransformSpec]) -> RasterImage:
    for spec in pipeline:
        image = spec.apply(image)
    return image


def _bilinear_gather_clamped(px: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample px (H, W, C) float64 at coordinate grids sx, sy with edge clamping."""
    h, w = px.shape[:2]
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[..., np.newaxis]
    fy = (sy - y0)[..., np.newaxis]
    top = px[y0, x0] * (1 - fx) + px[y0, x1] * fx
    bot = px[y1, x0] * (1 - fx) + px[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _bilinear_gather_zerofill(px: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample px at grids sx, sy; neighbors outside the image contribute 0."""
    h, w = px.shape[:2]
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = x0 + 1
    y1 = y0 + 1
    fx = (sx - x0)[..., np.newaxis]
    fy = (sy - y0)[..., np.newaxis]

    def fetch(ix, iy):
        valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        vals = px[np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)]
        return vals * valid[..., np.newaxis]

    top = fetch(x0, y0) * (1 - fx) + fetch(x1, y0) * fx
    bot = fetch(x0, y1) * (1 - fx) + fetch(x1, y1) * fx
    return top * (1 - fy) + bot * fy


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def rotate(image: RasterImage, degrees: int) -> RasterImage:
    """Rotate clockwise by one of the supported angles."""
    if degrees not in ROTATION_DEGREES:
        raise TransformError(f"unsupported rotation {degrees}")
    px = image.pixels
    if degrees == 90:
        return RasterImage(np.rot90(px, k=-1, axes=(0, 1)).copy())
    if degrees == 180:
        return RasterImage(px[::-1, ::-1, :].copy())

    h, w = px.shape[:2]
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    dst_x, dst_y = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    rel_x = dst_x - cx
    rel_y = dst_y - cy
    # inverse of the clockwise rotation
    sx = rel_x * cos_t + rel_y * sin_t + cx
    sy = -rel_x * sin_t + rel_y * cos_t + cy
    out = _bilinear_gather_zerofill(px.astype(np.float64), sx, sy)
    return RasterImage(_to_uint8(out))


def flip(image: RasterImage, axis: str) -> RasterImage:
    """Mirror the image: east_west reverses columns, north_south reverses rows."""
    if axis == "east_west":
        return RasterImage(image.pixels[:, ::-1, :].copy())
    if axis == "north_south":
        return RasterImage(image.pixels[::-1, :, :].copy())
    raise TransformError(f"unsupported flip axis {axis!r}")


def rescale(image: RasterImage, width: int, height: int) -> RasterImage:
    """Bilinear resample to exactly (width, height); aspect ratio not preserved."""
    if width < 1 or height < 1:
        raise TransformError(f"rescale target must be >= 1x1, got {width}x{height}")
    if width == image.width and height == image.height:
        return image.copy()
    px = image.pixels.astype(np.float64)
    sx = (np.arange(width, dtype=np.float64) + 0.5) * (image.width / width) - 0.5
    sy = (np.arange(height, dtype=np.float64) + 0.5) * (image.height / height) - 0.5
    grid_x, grid_y = np.meshgrid(sx, sy)
    out = _bilinear_gather_clamped(px, grid_x, grid_y)
    return RasterImage(_to_uint8(out))


def _zoom(image: RasterImage, factor: float) -> RasterImage:
    """Zoom without the range check; see :func:`zoom`."""
    if factor <= 0:
        raise TransformError(f"zoom factor must be positive, got {factor}")
    if factor == 1.0:
        return image.copy()
    w, h = image.width, image.height
    if factor > 1.0:
        cw = max(1, round_half_up(w / factor))
        ch = max(1, round_half_up(h / factor))
        x0 = (w - cw) // 2
        y0 = (h - ch) // 2
        window = RasterImage(image.pixels[y0 : y0 + ch, x0 : x0 + cw, :].copy())
        return rescale(window, w, h)
    sw = max(1, round_half_up(w * factor))
    sh = max(1, round_half_up(h * factor))
    small = rescale(image, sw, sh)
    canvas = np.zeros_like(image.pixels)
    x0 = (w - sw) // 2
    y0 = (h - sh) // 2
    canvas[y0 : y0 + sh, x0 : x0 + sw, :] = small.pixels
    return RasterImage(canvas)


def zoom(image: RasterImage, factor: float) -> RasterImage:
    """Zoom in (center-crop then upscale) or out (downscale onto zero canvas).

    Output dimensions always equal input dimensions. Factors are restricted
    to [1/1.5, 1.5].
    """
    if not (ZOOM_MIN <= factor <= ZOOM_MAX):
        raise TransformError(
            f"zoom factor must lie in [{ZOOM_MIN:.4f}, {ZOOM_MAX}], got {factor}"
        )
    return _zoom(image, factor)


def channel_noise(image: RasterImage, amplitude: int, seed: int) -> RasterImage:
    """Add one uniform integer offset per channel, clamped to [0, 255].

    Offsets are drawn channel-major from a splitmix64 stream seeded with
    ``seed``: one ``randint(-amplitude, +amplitude)`` per channel.
    """
    if not 0 <= amplitude <= NOISE_MAX_AMPLITUDE:
        raise TransformError(
            f"noise amplitude must lie in [0, {NOISE_MAX_AMPLITUDE}], got {amplitude}"
        )
    gen = SplitMix64(seed)
    offsets = np.array(
        [gen.randint(-amplitude, amplitude) for _ in range(image.channels)],
        dtype=np.int32,
    )
    shifted = image.pixels.astype(np.int32) + offsets[np.newaxis, np.newaxis, :]
    return RasterImage(np.clip(shifted, 0, 255).astype(np.uint8))


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def blur(image: RasterImage, sigma: float) -> RasterImage:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), clamp-to-edge."""
    if sigma <= 0:
        raise TransformError(f"blur sigma must be positive, got {sigma}")
    kernel = _gaussian_kernel(sigma)
    radius = (len(kernel) - 1) // 2
    px = image.pixels.astype(np.float64)

    padded = np.pad(px, ((radius, radius), (0, 0), (0, 0)), mode="edge")
    vert = np.zeros_like(px)
    for i, kv in enumerate(kernel):
        vert += kv * padded[i : i + image.height, :, :]

    padded = np.pad(vert, ((0, 0), (radius, radius), (0, 0)), mode="edge")
    out = np.zeros_like(px)
    for i, kv in enumerate(kernel):
        out += kv * padded[:, i : i + image.width, :]

    return RasterImage(_to_uint8(out))


def normalize_gsd(image: RasterImage, gsd: float, target_gsd: float) -> RasterImage:
    """Rescale so each output pixel covers ``target_gsd`` meters.

    Output dimensions are ``round(input * gsd / target_gsd)`` with half-up
    rounding, each at least 1. Equal input and target GSD is an identity.
    """
    factor = gsd_scale_factor(gsd, target_gsd)
    new_w = max(1, round_half_up(image.width * factor))
    new_h = max(1, round_half_up(image.height * factor))
    return rescale(image, new_w, new_h)
