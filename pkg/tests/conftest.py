"""Shared fixtures: synthetic rasters and on-disk dataset builders."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from satpipe.raster import RasterImage, write_png


def make_image(width: int, height: int, channels: int = 3, seed: int = 0) -> RasterImage:
    """Deterministic random test image."""
    rng = np.random.default_rng(seed)
    return RasterImage(
        rng.integers(0, 256, size=(height, width, channels), dtype=np.uint8)
    )


@pytest.fixture
def image_factory():
    return make_image


def write_record(
    root: Path,
    record_id: str,
    width: int,
    height: int,
    boxes: list[tuple[int, int, int, int, str]],
    gsd: float = 1.0,
    timestamp: str = "2017-06-01T12:00:00Z",
    features: dict | None = None,
    seed: int = 0,
) -> None:
    """Write one PNG plus its sidecar into a dataset directory."""
    root.mkdir(parents=True, exist_ok=True)
    image = make_image(width, height, seed=seed)
    write_png(image, root / f"{record_id}.png")
    sidecar = {
        "img_filename": f"{record_id}.png",
        "img_width": width,
        "img_height": height,
        "gsd": gsd,
        "timestamp": timestamp,
        "bounding_boxes": [
            {"category": category, "box": [x, y, w, h]} for x, y, w, h, category in boxes
        ],
        "features": features if features is not None else {"off_nadir": 12.5, "sun_elev": 40.0},
    }
    with open(root / f"{record_id}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh)


@pytest.fixture
def dataset_builder(tmp_path):
    """Returns (root, add_record) for building ad-hoc dataset directories."""

    def build(subdir: str = "data"):
        root = tmp_path / subdir
        root.mkdir(parents=True, exist_ok=True)

        def add(record_id, width, height, boxes, **kwargs):
            write_record(root, record_id, width, height, boxes, **kwargs)

        return root, add

    return build
