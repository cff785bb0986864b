"""Dataset ingest, validation, and the summary statistics that drive
preprocessing decisions.

Each image in a dataset directory has a sidecar ``<image-stem>.json`` with
fields ``img_filename``, ``img_width``, ``img_height``, ``gsd`` (meters),
``timestamp`` (RFC 3339), ``bounding_boxes`` (list of ``{"category": str,
"box": [x, y, w, h]}``) and ``features`` (name -> number). Malformed sidecars
or unreadable images are skipped and reported, never fatal; a missing root
directory is fatal.
"""

from __future__ import annotations

import json
import logging
import math
import statistics
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .geometry import BoundingBox

logger = logging.getLogger(__name__)

FALSE_DETECTION = "false_detection"
MAX_CATEGORIES = 63
MAX_FEATURES = 50
GSD_HISTOGRAM_BUCKET_METERS = 0.5

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class DatasetError(ValueError):
    """Raised for fatal dataset problems (missing directory, empty index)."""


@dataclass(frozen=True)
class CategoryLabel:
    id: int
    name: str

    def __post_init__(self):
        if not 0 <= self.id < MAX_CATEGORIES:
            raise DatasetError(f"category id must lie in [0, {MAX_CATEGORIES - 1}], got {self.id}")


@dataclass(frozen=True)
class ImageMetadata:
    """Per-image sidecar metadata. ``features`` preserves sidecar key order."""

    gsd: float
    timestamp: datetime
    features: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.gsd <= 0:
            raise DatasetError(f"gsd must be positive, got {self.gsd}")
        if len(self.features) >= MAX_FEATURES:
            raise DatasetError(f"more than {MAX_FEATURES - 1} metadata features")
        for name, value in self.features.items():
            if not math.isfinite(value):
                raise DatasetError(f"feature {name!r} is not finite: {value}")


@dataclass(frozen=True)
class ImageRecord:
    """One dataset entry. Training records carry exactly one box; evaluation
    records may carry several."""

    record_id: str
    image_path: Path
    image_width: int
    image_height: int
    boxes: tuple[tuple[BoundingBox, CategoryLabel], ...]
    metadata: ImageMetadata

    def __post_init__(self):
        for box, _ in self.boxes:
            if not box.within_image(self.image_width, self.image_height):
                raise DatasetError(
                    f"box ({box.x},{box.y},{box.width},{box.height}) exceeds image "
                    f"{self.image_width}x{self.image_height} in {self.record_id}"
                )


@dataclass(frozen=True)
class SkippedRecord:
    """One ingest warning: the sidecar that was skipped and why."""

    file: str
    reason: str

    def to_json(self) -> str:
        return json.dumps({"file": self.file, "reason": self.reason})


@dataclass(frozen=True)
class DatasetIndex:
    records: tuple[ImageRecord, ...]
    labels: tuple[CategoryLabel, ...]
    class_counts: dict[CategoryLabel, int]

    def __len__(self) -> int:
        return len(self.records)

    def label_by_name(self, name: str) -> CategoryLabel:
        for label in self.labels:
            if label.name == name:
                return label
        raise KeyError(name)


@dataclass(frozen=True)
class DatasetStats:
    mean_width: float
    mean_height: float
    median_width: float
    median_height: float
    mean_aspect_ratio: float
    median_aspect_ratio: float
    gsd_histogram: dict[int, int]
    class_frequencies: dict[CategoryLabel, float]


def _parse_timestamp(raw: str) -> datetime:
    # datetime.fromisoformat in 3.10 rejects the RFC 3339 Z suffix
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_sidecar(path: Path) -> tuple[str, int, int, list[tuple[BoundingBox, str]], ImageMetadata]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in ("img_filename", "img_width", "img_height", "gsd", "timestamp", "bounding_boxes"):
        if key not in doc:
            raise DatasetError(f"missing field {key!r}")
    width = int(doc["img_width"])
    height = int(doc["img_height"])
    if width < 1 or height < 1:
        raise DatasetError(f"image dims must be >= 1, got {width}x{height}")
    gsd = float(doc["gsd"])
    metadata = ImageMetadata(
        gsd=gsd,
        timestamp=_parse_timestamp(str(doc["timestamp"])),
        features={str(k): float(v) for k, v in doc.get("features", {}).items()},
    )
    boxes = []
    for entry in doc["bounding_boxes"]:
        x, y, w, h = (int(v) for v in entry["box"])
        boxes.append((BoundingBox(x, y, w, h), str(entry["category"])))
    return str(doc["img_filename"]), width, height, boxes, metadata


def ingest(root: str | Path) -> tuple[DatasetIndex, list[SkippedRecord]]:
    """Build a DatasetIndex from a directory of images plus sidecar JSONs.

    Returns the index and the list of skipped sidecars. Category ids are
    assigned by sorted name over the categories seen, with the reserved
    ``false_detection`` category always present.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset directory not found: {root}")

    parsed = []
    skipped: list[SkippedRecord] = []
    names: set[str] = {FALSE_DETECTION}
    for sidecar in sorted(root.glob("*.json")):
        try:
            img_name, width, height, boxes, metadata = _parse_sidecar(sidecar)
            image_path = root / img_name
            if image_path.suffix.lower() not in IMAGE_SUFFIXES:
                raise DatasetError(f"unsupported image type {image_path.suffix!r}")
            if not image_path.is_file():
                raise DatasetError(f"image file missing: {img_name}")
            for box, _ in boxes:
                if not box.within_image(width, height):
                    raise DatasetError(
                        f"box ({box.x},{box.y},{box.width},{box.height}) exceeds "
                        f"image {width}x{height}"
                    )
        except (DatasetError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            skipped.append(SkippedRecord(file=sidecar.name, reason=str(exc)))
            logger.warning("skipping %s: %s", sidecar.name, exc)
            continue
        parsed.append((sidecar.stem, image_path, width, height, boxes, metadata))
        names.update(category for _, category in boxes)

    if len(names) > MAX_CATEGORIES:
        raise DatasetError(f"{len(names)} categories exceed the {MAX_CATEGORIES}-class limit")
    labels = tuple(CategoryLabel(i, name) for i, name in enumerate(sorted(names)))
    by_name = {label.name: label for label in labels}

    records = []
    class_counts: dict[CategoryLabel, int] = {}
    for stem, image_path, width, height, boxes, metadata in parsed:
        labeled = tuple((box, by_name[category]) for box, category in boxes)
        records.append(
            ImageRecord(
                record_id=stem,
                image_path=image_path,
                image_width=width,
                image_height=height,
                boxes=labeled,
                metadata=metadata,
            )
        )
        for _, label in labeled:
            class_counts[label] = class_counts.get(label, 0) + 1

    return DatasetIndex(tuple(records), labels, class_counts), skipped


def sidecar_dict(record: ImageRecord) -> dict:
    """Serialize a record back to the sidecar schema."""
    return {
        "img_filename": record.image_path.name,
        "img_width": record.image_width,
        "img_height": record.image_height,
        "gsd": record.metadata.gsd,
        "timestamp": record.metadata.timestamp.isoformat().replace("+00:00", "Z"),
        "bounding_boxes": [
            {"category": label.name, "box": [box.x, box.y, box.width, box.height]}
            for box, label in record.boxes
        ],
        "features": dict(record.metadata.features),
    }


def write_sidecar(record: ImageRecord, directory: str | Path) -> Path:
    path = Path(directory) / f"{record.record_id}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sidecar_dict(record), fh)
    return path


def lower_median(values: list[float]) -> float:
    """Order statistic at index (n - 1) // 2: the lower median for even n."""
    if not values:
        raise DatasetError("no values")
    return sorted(values)[(len(values) - 1) // 2]


def compute_stats(index: DatasetIndex) -> DatasetStats:
    """Resolution means/medians, GSD histogram, and class frequencies.

    Aspect ratio statistics are the ratio of the corresponding width and
    height statistics. The GSD histogram buckets by 0.5 m: bucket ``i``
    holds ``gsd in [0.5 i, 0.5 (i + 1))``.
    """
    if not index.records:
        raise DatasetError("no records")
    widths = [float(r.image_width) for r in index.records]
    heights = [float(r.image_height) for r in index.records]
    mean_w = statistics.fmean(widths)
    mean_h = statistics.fmean(heights)
    median_w = lower_median(widths)
    median_h = lower_median(heights)

    histogram: dict[int, int] = {}
    for record in index.records:
        bucket = int(record.metadata.gsd / GSD_HISTOGRAM_BUCKET_METERS)
        histogram[bucket] = histogram.get(bucket, 0) + 1

    total_boxes = sum(index.class_counts.values())
    frequencies = {
        label: count / total_boxes for label, count in index.class_counts.items()
    }

    return DatasetStats(
        mean_width=mean_w,
        mean_height=mean_h,
        median_width=median_w,
        median_height=median_h,
        mean_aspect_ratio=mean_w / mean_h,
        median_aspect_ratio=median_w / median_h,
        gsd_histogram=dict(sorted(histogram.items())),
        class_frequencies=frequencies,
    )


def bucket_dims(point: tuple[int, int]) -> tuple[int, int]:
    """Round a bucket's dimensions to the nearest multiple of 8, minimum 8."""
    return (max(8, 8 * round(point[0] / 8)), max(8, 8 * round(point[1] / 8)))


def quantile_points(resolutions: list[tuple[int, int]], k: int) -> list[tuple[int, int]]:
    """Pick k quantile points of the area-ordered (width, height) multiset.

    k = 1 takes the lower median; k >= 2 takes evenly spaced quantile levels
    i / (k - 1) with the lower order-statistic convention, so the smallest
    and largest resolutions anchor the range. k is clamped (with a warning)
    to the number of distinct resolutions, and duplicate points are dropped.
    """
    if k < 1:
        raise DatasetError(f"bucket count must be >= 1, got {k}")
    if not resolutions:
        raise DatasetError("no resolutions")
    distinct = len(set(resolutions))
    if k > distinct:
        logger.warning("%d buckets requested but only %d distinct resolutions; clamping", k, distinct)
        k = distinct

    ordered = sorted(resolutions, key=lambda wh: (wh[0] * wh[1], wh))
    n = len(ordered)
    levels = [0.5] if k == 1 else [i / (k - 1) for i in range(k)]
    points = []
    for q in levels:
        point = ordered[math.floor(q * (n - 1))]
        if point not in points:
            points.append(point)
    return points


def bucket_distance(resolution: tuple[int, int], bucket: tuple[int, int]) -> float:
    """Scale-symmetric distance |log(w/bw)| + |log(h/bh)|."""
    return abs(math.log(resolution[0] / bucket[0])) + abs(math.log(resolution[1] / bucket[1]))


def nearest_bucket(
    resolution: tuple[int, int], points: list[tuple[int, int]]
) -> tuple[int, int]:
    """The quantile point minimizing the log distance; ties break toward the
    smaller point."""
    return min(points, key=lambda b: (bucket_distance(resolution, b), b))


def bucket_resolutions(
    index: DatasetIndex, k: int
) -> tuple[list[tuple[int, int]], dict[str, tuple[int, int]]]:
    """Quantile buckets over the index's image resolutions plus per-record
    assignments.

    Records snap to their nearest quantile point; the returned bucket list
    and assignment values carry the points' multiple-of-8 dimensions (the
    actual resize targets), deduplicated after rounding.
    """
    if not index.records:
        raise DatasetError("no records")
    resolutions = [(r.image_width, r.image_height) for r in index.records]
    points = quantile_points(resolutions, k)
    buckets = []
    for point in points:
        dims = bucket_dims(point)
        if dims not in buckets:
            buckets.append(dims)
    assignment = {
        r.record_id: bucket_dims(nearest_bucket((r.image_width, r.image_height), points))
        for r in index.records
    }
    return buckets, assignment
