"""Image-processing benchmark harness: timed trials of fixed transform
pipelines over a corpus, across pluggable backends.

Three standard tests, each including the image load:

* T1: load, Gaussian blur (sigma 2), east-west flip
* T2: load, rotate 45 degrees
* T3: load, rescale to 224x224

Each (backend, test) pair gets one untimed warm-up pass (also used to check
output equivalence against the first backend, within +/-2 per 8-bit sample)
followed by ``runs`` timed passes. Timing comparisons against a backend
whose outputs mismatch are labeled invalid rather than suppressed.
"""

from __future__ import annotations

import hashlib
import json
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from . import transforms
from .raster import RasterError, RasterImage, read_image

TESTS = ("T1", "T2", "T3")
BLUR_SIGMA = 2.0
RESCALE_TARGET = (224, 224)
EQUIVALENCE_TOLERANCE = 2

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class BenchError(RuntimeError):
    """Raised for missing backends or an insufficient corpus."""


class Backend(Protocol):
    """The primitive ops a benchmark backend must provide."""

    def load(self, path: Path) -> RasterImage: ...

    def blur(self, image: RasterImage, sigma: float) -> RasterImage: ...

    def flip_ew(self, image: RasterImage) -> RasterImage: ...

    def rotate45(self, image: RasterImage) -> RasterImage: ...

    def rescale(self, image: RasterImage, width: int, height: int) -> RasterImage: ...


def _to_rgb(image: RasterImage) -> RasterImage:
    if image.channels == 3:
        return image
    if image.channels == 1:
        return RasterImage(np.repeat(image.pixels, 3, axis=2))
    return RasterImage(image.pixels[:, :, :3].copy())


class ReferenceBackend:
    """This package's own transforms."""

    def load(self, path: Path) -> RasterImage:
        return _to_rgb(read_image(path))

    def blur(self, image: RasterImage, sigma: float) -> RasterImage:
        return transforms.blur(image, sigma)

    def flip_ew(self, image: RasterImage) -> RasterImage:
        return transforms.flip(image, "east_west")

    def rotate45(self, image: RasterImage) -> RasterImage:
        return transforms.rotate(image, 45)

    def rescale(self, image: RasterImage, width: int, height: int) -> RasterImage:
        return transforms.rescale(image, width, height)


class PillowBackend:
    """Pillow-based implementations of the same ops."""

    def __init__(self):
        from PIL import Image, ImageFilter

        self._Image = Image
        self._ImageFilter = ImageFilter

    def _from_pil(self, im) -> RasterImage:
        return RasterImage(np.asarray(im, dtype=np.uint8))

    def _to_pil(self, image: RasterImage):
        return self._Image.fromarray(image.pixels, mode="RGB")

    def load(self, path: Path) -> RasterImage:
        with self._Image.open(path) as im:
            return self._from_pil(im.convert("RGB"))

    def blur(self, image: RasterImage, sigma: float) -> RasterImage:
        return self._from_pil(
            self._to_pil(image).filter(self._ImageFilter.GaussianBlur(radius=sigma))
        )

    def flip_ew(self, image: RasterImage) -> RasterImage:
        return self._from_pil(self._to_pil(image).transpose(self._Image.Transpose.FLIP_LEFT_RIGHT))

    def rotate45(self, image: RasterImage) -> RasterImage:
        return self._from_pil(
            self._to_pil(image).rotate(-45, resample=self._Image.Resampling.BILINEAR)
        )

    def rescale(self, image: RasterImage, width: int, height: int) -> RasterImage:
        return self._from_pil(
            self._to_pil(image).resize((width, height), self._Image.Resampling.BILINEAR)
        )


class OpenCVBackend:
    """OpenCV-based implementations of the same ops."""

    def __init__(self):
        import cv2

        self._cv2 = cv2

    def load(self, path: Path) -> RasterImage:
        bgr = self._cv2.imread(str(path), self._cv2.IMREAD_COLOR)
        if bgr is None:
            raise RasterError(f"cannot decode image {path}")
        return RasterImage(self._cv2.cvtColor(bgr, self._cv2.COLOR_BGR2RGB))

    def blur(self, image: RasterImage, sigma: float) -> RasterImage:
        radius = math.ceil(3 * sigma)
        size = 2 * radius + 1
        out = self._cv2.GaussianBlur(
            image.pixels, (size, size), sigmaX=sigma,
            borderType=self._cv2.BORDER_REPLICATE,
        )
        return RasterImage(out)

    def flip_ew(self, image: RasterImage) -> RasterImage:
        return RasterImage(self._cv2.flip(image.pixels, 1))

    def rotate45(self, image: RasterImage) -> RasterImage:
        h, w = image.height, image.width
        matrix = self._cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), -45, 1.0)
        out = self._cv2.warpAffine(
            image.pixels, matrix, (w, h), flags=self._cv2.INTER_LINEAR,
            borderMode=self._cv2.BORDER_CONSTANT, borderValue=0,
        )
        return RasterImage(out)

    def rescale(self, image: RasterImage, width: int, height: int) -> RasterImage:
        out = self._cv2.resize(
            image.pixels, (width, height), interpolation=self._cv2.INTER_LINEAR
        )
        return RasterImage(out)


_REGISTRY: dict[str, Callable[[], Backend]] = {}


def register_backend(name: str, factory: Callable[[], Backend]) -> None:
    _REGISTRY[name] = factory


def available_backends() -> list[str]:
    return sorted(_REGISTRY)


def get_backend(name: str) -> Backend:
    if name not in _REGISTRY:
        raise BenchError(f"backend {name!r} is not registered (have {available_backends()})")
    return _REGISTRY[name]()


register_backend("reference", ReferenceBackend)
register_backend("pillow", PillowBackend)
try:  # cv2 is optional
    import cv2  # noqa: F401

    register_backend("opencv", OpenCVBackend)
except ImportError:
    pass


@dataclass(frozen=True)
class BenchSpec:
    corpus_dir: Path
    image_count: int = 300
    runs: int = 5
    tests: tuple[str, ...] = TESTS
    backends: tuple[str, ...] = ("reference",)
    jobs: int = 1

    def __post_init__(self):
        if self.runs < 1 or self.image_count < 1:
            raise BenchError("runs and image_count must be >= 1")
        bad = set(self.tests) - set(TESTS)
        if bad:
            raise BenchError(f"unknown tests: {sorted(bad)}")


@dataclass(frozen=True)
class BenchEntry:
    backend: str
    test: str
    per_run_seconds: tuple[float, ...]
    mean_seconds: float
    stddev_seconds: float
    mismatched_images: int
    timing_valid: bool


@dataclass(frozen=True)
class BenchReport:
    corpus_dir: str
    corpus_digest: str
    image_count: int
    runs: int
    mode: str
    entries: tuple[BenchEntry, ...]
    skipped_images: tuple[str, ...] = field(default=())

    @property
    def has_mismatch(self) -> bool:
        return any(e.mismatched_images > 0 for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "corpus_dir": self.corpus_dir,
            "corpus_digest": self.corpus_digest,
            "image_count": self.image_count,
            "runs": self.runs,
            "warmup_runs": 1,
            "mode": self.mode,
            "skipped_images": list(self.skipped_images),
            "results": [
                {
                    "backend": e.backend,
                    "test": e.test,
                    "per_run_seconds": list(e.per_run_seconds),
                    "mean_seconds": e.mean_seconds,
                    "stddev_seconds": e.stddev_seconds,
                    "mismatched_images": e.mismatched_images,
                    "timing_valid": e.timing_valid,
                }
                for e in self.entries
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        header = f"{'backend':<12} {'test':<4} {'mean_s':>10} {'stddev_s':>10} {'mismatches':>10}  valid"
        lines = [header, "-" * len(header)]
        for e in self.entries:
            lines.append(
                f"{e.backend:<12} {e.test:<4} {e.mean_seconds:>10.4f} "
                f"{e.stddev_seconds:>10.4f} {e.mismatched_images:>10d}  "
                f"{'yes' if e.timing_valid else 'NO'}"
            )
        return "\n".join(lines)


def _pipeline(backend: Backend, test: str) -> Callable[[Path], RasterImage]:
    if test == "T1":
        return lambda p: backend.flip_ew(backend.blur(backend.load(p), BLUR_SIGMA))
    if test == "T2":
        return lambda p: backend.rotate45(backend.load(p))
    if test == "T3":
        return lambda p: backend.rescale(backend.load(p), *RESCALE_TARGET)
    raise BenchError(f"unknown test {test!r}")


def _select_corpus(spec: BenchSpec) -> tuple[list[Path], list[str], str]:
    corpus = Path(spec.corpus_dir)
    if not corpus.is_dir():
        raise BenchError(f"corpus directory not found: {corpus}")
    candidates = sorted(
        p for p in corpus.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    selected: list[Path] = []
    skipped: list[str] = []
    for path in candidates:
        if len(selected) == spec.image_count:
            break
        try:
            read_image(path)
        except RasterError:
            skipped.append(path.name)
            continue
        selected.append(path)
    if len(selected) < spec.image_count:
        raise BenchError(
            f"corpus has only {len(selected)} decodable images, need {spec.image_count}"
        )
    digest = hashlib.sha256()
    for path in selected:
        digest.update(path.name.encode())
        digest.update(hashlib.sha256(path.read_bytes()).digest())
    return selected, skipped, digest.hexdigest()


def _equivalent(a: RasterImage, b: RasterImage) -> bool:
    if a.pixels.shape != b.pixels.shape:
        return False
    diff = np.abs(a.pixels.astype(np.int16) - b.pixels.astype(np.int16))
    return int(diff.max(initial=0)) <= EQUIVALENCE_TOLERANCE


def run_bench(spec: BenchSpec) -> BenchReport:
    """Run every (backend, test) pair: warm-up with equivalence check, then
    ``spec.runs`` timed passes over the corpus."""
    images, skipped, digest = _select_corpus(spec)
    backends = [(name, get_backend(name)) for name in spec.backends]

    entries: list[BenchEntry] = []
    for test in spec.tests:
        reference_outputs: list[RasterImage] | None = None
        for position, (name, backend) in enumerate(backends):
            pipeline = _pipeline(backend, test)

            mismatches = 0
            outputs = [pipeline(path) for path in images]  # warm-up, untimed
            if position == 0:
                reference_outputs = outputs
            else:
                assert reference_outputs is not None
                mismatches = sum(
                    0 if _equivalent(ref, out) else 1
                    for ref, out in zip(reference_outputs, outputs)
                )
            del outputs

            per_run = []
            for _ in range(spec.runs):
                if spec.jobs > 1:
                    with ThreadPoolExecutor(max_workers=spec.jobs) as pool:
                        t0 = time.perf_counter()
                        for _ in pool.map(pipeline, images):
                            pass
                        per_run.append(time.perf_counter() - t0)
                else:
                    t0 = time.perf_counter()
                    for path in images:
                        pipeline(path)
                    per_run.append(time.perf_counter() - t0)

            entries.append(
                BenchEntry(
                    backend=name,
                    test=test,
                    per_run_seconds=tuple(per_run),
                    mean_seconds=statistics.fmean(per_run),
                    stddev_seconds=statistics.stdev(per_run) if len(per_run) > 1 else 0.0,
                    mismatched_images=mismatches,
                    timing_valid=mismatches == 0,
                )
            )

    return BenchReport(
        corpus_dir=str(spec.corpus_dir),
        corpus_digest=digest,
        image_count=spec.image_count,
        runs=spec.runs,
        mode="single-thread" if spec.jobs <= 1 else f"parallel-{spec.jobs}",
        entries=tuple(entries),
        skipped_images=tuple(skipped),
    )
