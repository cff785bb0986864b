"""Bounding-box arithmetic: context-window expansion, cropping, GSD scaling.

The expansion rule: given a context ratio ``c`` and the aspect ratio
``AR = image_width / image_height`` of the full image, the per-side context
window is ``cw = c * AR / 2``. Each horizontal side of the box gains
``cw * box.width`` pixels and each vertical side ``cw * box.height`` pixels.
The expanded origin floors, the far edge ceils, and the result is clamped to
the image bounds. A ratio of 0 returns the box unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .raster import RasterImage


class GeometryError(ValueError):
    """Raised when a box falls outside its image or an argument is out of domain."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box: (x, y) is the top-left corner."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise GeometryError(f"box must be at least 1x1, got {self.width}x{self.height}")
        if self.x < 0 or self.y < 0:
            raise GeometryError(f"box origin must be nonnegative, got ({self.x}, {self.y})")

    @property
    def x2(self) -> int:
        """One past the right edge."""
        return self.x + self.width

    @property
    def y2(self) -> int:
        """One past the bottom edge."""
        return self.y + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and self.x2 >= other.x2
            and self.y2 >= other.y2
        )

    def within_image(self, image_width: int, image_height: int) -> bool:
        return self.x2 <= image_width and self.y2 <= image_height

    def intersection_area(self, other: "BoundingBox") -> int:
        w = min(self.x2, other.x2) - max(self.x, other.x)
        h = min(self.y2, other.y2) - max(self.y, other.y)
        if w <= 0 or h <= 0:
            return 0
        return w * h


@dataclass(frozen=True)
class ContextRatio:
    """Dimensionless factor controlling how much surrounding landscape a box gains."""

    c: float

    def __post_init__(self):
        if self.c < 0:
            raise GeometryError(f"context ratio must be nonnegative, got {self.c}")


@dataclass(frozen=True)
class ExpandedBox:
    """Result of context expansion.

    ``applied_pad_x`` / ``applied_pad_y`` are the requested per-side pads in
    pixels; when ``clamped`` is true the box reflects less than the full pad
    on at least one side.
    """

    box: BoundingBox
    applied_pad_x: float
    applied_pad_y: float
    clamped: bool


def expand_context(
    box: BoundingBox,
    image_width: int,
    image_height: int,
    ratio: ContextRatio | float,
) -> ExpandedBox:
    """Expand a box by the context-window rule and clamp to the image.

    Raises GeometryError if the box is not fully inside the image.
    """
    if isinstance(ratio, (int, float)):
        ratio = ContextRatio(float(ratio))
    if image_width < 1 or image_height < 1:
        raise GeometryError(f"image dims must be >= 1, got {image_width}x{image_height}")
    if not box.within_image(image_width, image_height):
        raise GeometryError(
            f"box exceeds image: box ({box.x},{box.y},{box.width},{box.height}) "
            f"vs image {image_width}x{image_height}"
        )
    if ratio.c == 0:
        return ExpandedBox(box=box, applied_pad_x=0.0, applied_pad_y=0.0, clamped=False)

    aspect = image_width / image_height
    cw = ratio.c * aspect / 2.0
    pad_x = cw * box.width
    pad_y = cw * box.height

    x0 = math.floor(box.x - pad_x)
    y0 = math.floor(box.y - pad_y)
    x1 = math.ceil(box.x + box.width + pad_x)
    y1 = math.ceil(box.y + box.height + pad_y)

    cx0 = max(x0, 0)
    cy0 = max(y0, 0)
    cx1 = min(x1, image_width)
    cy1 = min(y1, image_height)
    clamped = (cx0, cy0, cx1, cy1) != (x0, y0, x1, y1)

    return ExpandedBox(
        box=BoundingBox(cx0, cy0, cx1 - cx0, cy1 - cy0),
        applied_pad_x=pad_x,
        applied_pad_y=pad_y,
        clamped=clamped,
    )


def gsd_scale_factor(gsd: float, target_gsd: float) -> float:
    """Factor by which image dimensions must be multiplied so that each
    output pixel covers ``target_gsd`` meters on the ground."""
    if gsd <= 0 or target_gsd <= 0:
        raise GeometryError(f"gsd values must be positive, got {gsd} and {target_gsd}")
    return gsd / target_gsd


def crop(image: RasterImage, box: BoundingBox) -> RasterImage:
    """Extract the boxed region; output pixel (i, j) equals input (box.x+i, box.y+j)."""
    if not box.within_image(image.width, image.height):
        raise GeometryError(
            f"box exceeds image: box ({box.x},{box.y},{box.width},{box.height}) "
            f"vs image {image.width}x{image.height}"
        )
    return RasterImage(image.pixels[box.y : box.y2, box.x : box.x2, :].copy())
