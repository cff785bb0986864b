"""Offline augmentation precompute, metadata noising, and false-detection
crop generation.

Augmented variants are enumerated as the cross-product of the transform
families (rotations x flips x zooms x noise), executed once, and written to
disk so training never pays CPU cost per epoch. Every operation here is
deterministic given its seed; the RNG consumption order is documented on
each function so runs can be replayed exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import timedelta
from itertools import product
from pathlib import Path

from .dataset import FALSE_DETECTION, DatasetIndex, ImageMetadata, ImageRecord
from .geometry import BoundingBox
from .raster import RasterImage, write_png
from .rng import SplitMix64, hash_seed
from .transforms import TransformSpec, apply_pipeline

logger = logging.getLogger(__name__)

ROTATION_CHOICES = (0, 15, 30, 45, 90, 180)
FLIP_CHOICES = ("none", "east_west", "north_south")
ZOOM_CHOICES = (1.0 / 1.5, 0.8, 1.0, 1.25, 1.5)
NOISE_CHOICES = (False, True)
FAMILIES = ("rotations", "flips", "zooms", "noise")
DEFAULT_NOISE_AMPLITUDE = 10

_FLIP_TAG = {"none": "NO", "east_west": "EW", "north_south": "NS"}


class AugmentError(RuntimeError):
    """Raised when plan execution cannot complete."""


@dataclass(frozen=True)
class PlanStep:
    variant_tag: str
    pipeline: tuple[TransformSpec, ...]


@dataclass(frozen=True)
class AugmentationPlan:
    record_id: str
    steps: tuple[PlanStep, ...]


@dataclass(frozen=True)
class NoiseConfig:
    """Metadata noising parameters: a half-width per normalized feature unit
    and integer jitters for time of day (seconds) and day of year (days)."""

    feature_noise_half_width: float = 0.1
    time_of_day_jitter: int = 4 * 3600
    day_of_year_jitter: int = 45
    seed: int = 0

    def __post_init__(self):
        if self.feature_noise_half_width < 0:
            raise ValueError("feature noise half-width must be >= 0")
        if self.time_of_day_jitter < 0 or self.day_of_year_jitter < 0:
            raise ValueError("jitters must be >= 0")


@dataclass(frozen=True)
class FalseDetectionConfig:
    max_overlap_fraction: float = 0.1
    crops_per_image: int = 1
    size_source: tuple[tuple[int, int], ...] | None = None
    seed: int = 0
    max_attempts_per_crop: int = 50

    def __post_init__(self):
        if not 0.0 <= self.max_overlap_fraction <= 1.0:
            raise ValueError("max_overlap_fraction must lie in [0, 1]")


def _variant_tag(degrees: int, axis: str, factor: float, noise: bool) -> str:
    return (
        f"r{degrees:03d}_f{_FLIP_TAG[axis]}_z{round(factor * 100):03d}_n{int(noise)}"
    )


def plan_augmentations(
    record: ImageRecord | str,
    enabled_families: set[str],
    noise_amplitude: int = DEFAULT_NOISE_AMPLITUDE,
) -> AugmentationPlan:
    """Enumerate the augmentation cross-product for one record.

    Disabled families contribute only their identity entry. Variant tags
    encode the pipeline (e.g. ``r090_fEW_z125_n1``) and the per-variant
    noise seed is derived from (record_id, variant_tag), so the plan is a
    pure function of its inputs.
    """
    unknown = set(enabled_families) - set(FAMILIES)
    if unknown:
        raise ValueError(f"unknown augmentation families: {sorted(unknown)}")
    record_id = record if isinstance(record, str) else record.record_id

    rotations = ROTATION_CHOICES if "rotations" in enabled_families else (0,)
    flips = FLIP_CHOICES if "flips" in enabled_families else ("none",)
    zooms = ZOOM_CHOICES if "zooms" in enabled_families else (1.0,)
    noises = NOISE_CHOICES if "noise" in enabled_families else (False,)

    steps = []
    for degrees, axis, factor, noisy in product(rotations, flips, zooms, noises):
        tag = _variant_tag(degrees, axis, factor, noisy)
        pipeline: list[TransformSpec] = []
        if degrees != 0:
            pipeline.append(TransformSpec.rotate(degrees))
        if axis != "none":
            pipeline.append(TransformSpec.flip(axis))
        if factor != 1.0:
            pipeline.append(TransformSpec.zoom(factor))
        if noisy:
            pipeline.append(
                TransformSpec.channel_noise(noise_amplitude, hash_seed(record_id, tag))
            )
        steps.append(PlanStep(variant_tag=tag, pipeline=tuple(pipeline)))
    return AugmentationPlan(record_id=record_id, steps=tuple(steps))


def _execute_step(
    plan_id: str, step: PlanStep, source: RasterImage, out_dir: Path
) -> dict:
    out = apply_pipeline(source, list(step.pipeline))
    filename = f"{plan_id}__{step.variant_tag}.png"
    path = out_dir / filename
    try:
        write_png(out, path)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError as exc:
        path.unlink(missing_ok=True)
        raise AugmentError(f"failed writing {filename}: {exc}") from exc
    return {
        "record_id": plan_id,
        "variant_tag": step.variant_tag,
        "file": filename,
        "pipeline": [spec.to_dict() for spec in step.pipeline],
        "sha256": digest,
    }


def execute_plan(
    plan: AugmentationPlan,
    source: RasterImage,
    out_dir: str | Path,
    jobs: int = 1,
) -> list[dict]:
    """Render every plan step to ``out_dir`` as PNG and return the manifest.

    Output files are named ``<record_id>__<variant_tag>.png``. Entries come
    back in plan order regardless of worker count, so re-running (any jobs
    value) reproduces identical files and digests. On a write failure the
    partial file is removed and the error names the files already written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: list[dict] = []
    if jobs <= 1:
        for step in plan.steps:
            entries.append(_execute_step(plan.record_id, step, source, out_dir))
        return entries

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(_execute_step, plan.record_id, step, source, out_dir)
            for step in plan.steps
        ]
        try:
            for future in futures:
                entries.append(future.result())
        except AugmentError as exc:
            written = [e["file"] for e in entries]
            raise AugmentError(
                f"{exc}; manifest is partial, {len(written)} files already written: {written}"
            ) from exc
    return entries


def write_manifest(entries: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry) + "\n")


def augment_metadata(
    metadata: ImageMetadata,
    cfg: NoiseConfig,
    normalizer: dict[str, tuple[float, float]],
) -> ImageMetadata:
    """Perturb metadata features and timestamp; GSD is never touched.

    Each feature is min-max normalized, shifted by a uniform draw in
    [-h, +h], clamped to [0, 1], and de-normalized. The RNG consumes, in
    order: one uniform per feature (feature order), then one integer
    seconds draw, then one integer days draw.
    """
    gen = SplitMix64(cfg.seed)
    h = cfg.feature_noise_half_width
    features: dict[str, float] = {}
    for name, value in metadata.features.items():
        if name not in normalizer:
            raise KeyError(f"no normalizer entry for feature {name!r}")
        lo, hi = normalizer[name]
        u = gen.uniform_in(-h, +h)
        if u == 0.0:
            features[name] = min(max(value, lo), hi)
            continue
        span = hi - lo
        norm = (value - lo) / span if span != 0 else 0.0
        norm = min(max(norm + u, 0.0), 1.0)
        features[name] = lo + norm * span

    seconds = gen.randint(-cfg.time_of_day_jitter, cfg.time_of_day_jitter)
    days = gen.randint(-cfg.day_of_year_jitter, cfg.day_of_year_jitter)
    timestamp = metadata.timestamp + timedelta(days=days, seconds=seconds)
    return ImageMetadata(gsd=metadata.gsd, timestamp=timestamp, features=features)


@dataclass(frozen=True)
class FalseDetectionCrop:
    record: ImageRecord
    box: BoundingBox
    category: str = FALSE_DETECTION


def labeled_box_sizes(index: DatasetIndex) -> tuple[tuple[int, int], ...]:
    """Empirical (width, height) multiset of all non-false-detection boxes."""
    sizes = [
        (box.width, box.height)
        for record in index.records
        for box, label in record.boxes
        if label.name != FALSE_DETECTION
    ]
    return tuple(sizes)


def generate_false_detections(
    index: DatasetIndex, cfg: FalseDetectionConfig
) -> list[FalseDetectionCrop]:
    """Sample background crops that existing boxes do not contaminate.

    For every record, up to ``crops_per_image`` crops are drawn: dimensions
    come from the empirical labeled-box size distribution, position is
    uniform, and a candidate is accepted only if every labeled box overlaps
    it by at most ``max_overlap_fraction`` of the crop's area. The RNG
    consumes, per attempt: one size index, then (if the size fits) one x and
    one y draw.
    """
    if not index.records:
        raise ValueError("no records")
    sizes = cfg.size_source if cfg.size_source is not None else labeled_box_sizes(index)
    if not sizes:
        logger.warning("no labeled boxes to draw crop sizes from; nothing generated")
        return []

    gen = SplitMix64(cfg.seed)
    crops: list[FalseDetectionCrop] = []
    for record in index.records:
        for _ in range(cfg.crops_per_image):
            accepted = None
            for _ in range(cfg.max_attempts_per_crop):
                cw, ch = sizes[gen.randint(0, len(sizes) - 1)]
                if cw > record.image_width or ch > record.image_height:
                    continue
                x = gen.randint(0, record.image_width - cw)
                y = gen.randint(0, record.image_height - ch)
                candidate = BoundingBox(x, y, cw, ch)
                contaminated = any(
                    box.intersection_area(candidate) / candidate.area
                    > cfg.max_overlap_fraction
                    for box, _ in record.boxes
                )
                if not contaminated:
                    accepted = candidate
                    break
            if accepted is None:
                logger.warning(
                    "no admissible crop for %s after %d attempts",
                    record.record_id,
                    cfg.max_attempts_per_crop,
                )
            else:
                crops.append(FalseDetectionCrop(record=record, box=accepted))
    return crops


def false_detection_sidecar(crop: FalseDetectionCrop) -> dict:
    """Sidecar-schema record for one generated crop."""
    record = crop.record
    return {
        "img_filename": record.image_path.name,
        "img_width": record.image_width,
        "img_height": record.image_height,
        "gsd": record.metadata.gsd,
        "timestamp": record.metadata.timestamp.isoformat().replace("+00:00", "Z"),
        "bounding_boxes": [
            {
                "category": crop.category,
                "box": [crop.box.x, crop.box.y, crop.box.width, crop.box.height],
            }
        ],
        "features": dict(record.metadata.features),
    }
