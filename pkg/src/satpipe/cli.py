"""Command-line entry point: ingest, stats, preprocess, augment, false-dets,
sample, bench, and stage-sim subcommands.

Exit codes: 0 success, 1 invariant or output-equivalence failure, 2 usage
error or fatal I/O. Flags override config-file values, which override the
built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import augment as aug
from . import bench as bench_mod
from . import config as config_mod
from . import dataset as ds
from . import sampler as sampler_mod
from . import staging as staging_mod
from . import transforms
from .geometry import GeometryError, expand_context
from .geometry import crop as crop_image
from .raster import RasterError, read_image, write_png

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_FATAL = 2


def _parse_size(value: str) -> tuple[int, int]:
    try:
        w, h = value.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected WxH, got {value!r}") from exc


def _load_config_doc(args) -> dict | None:
    if getattr(args, "config", None):
        return config_mod.load_config_file(args.config)
    return None


def cmd_ingest(args) -> int:
    index, skipped = ds.ingest(args.root)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            for entry in skipped:
                fh.write(entry.to_json() + "\n")
    print(
        f"ingested {len(index.records)} records, "
        f"{len(index.class_counts)} classes, {len(skipped)} skipped"
    )
    return EXIT_OK


def cmd_stats(args) -> int:
    index, _ = ds.ingest(args.root)
    stats = ds.compute_stats(index)
    print(f"{'':>8} {'width':>8} {'height':>8} {'aspect':>8}")
    print(f"{'mean':>8} {stats.mean_width:>8.1f} {stats.mean_height:>8.1f} {stats.mean_aspect_ratio:>8.2f}")
    print(f"{'median':>8} {stats.median_width:>8.1f} {stats.median_height:>8.1f} {stats.median_aspect_ratio:>8.2f}")
    print("\ngsd histogram (0.5 m buckets):")
    for bucket, count in stats.gsd_histogram.items():
        lo = bucket * ds.GSD_HISTOGRAM_BUCKET_METERS
        print(f"  [{lo:.1f}, {lo + ds.GSD_HISTOGRAM_BUCKET_METERS:.1f}) m: {count}")
    print("\nclass frequencies:")
    for label, freq in sorted(stats.class_frequencies.items(), key=lambda kv: kv[0].id):
        print(f"  {label.id:>3} {label.name}: {freq:.4f}")
    return EXIT_OK


def _preprocess_one(task, cfg, target):
    record, box_index, box, label = task
    expanded = expand_context(box, record.image_width, record.image_height, cfg.context_ratio)
    image = read_image(record.image_path)
    patch = crop_image(image, expanded.box)
    patch = transforms.normalize_gsd(patch, record.metadata.gsd, cfg.target_gsd)
    patch = transforms.rescale(patch, *target)
    return expanded, patch


def cmd_preprocess(args, parser) -> int:
    if args.rescale is not None and args.buckets is not None:
        parser.error("--rescale and --buckets are mutually exclusive")
    doc = _load_config_doc(args)
    flags = {
        "context_ratio": args.context_ratio,
        "target_gsd": args.target_gsd,
        "rescale_width": args.rescale[0] if args.rescale else None,
        "rescale_height": args.rescale[1] if args.rescale else None,
        "bucket_count": args.buckets,
    }
    cfg = config_mod.build_pipeline_config(flags, doc)

    index, skipped = ds.ingest(args.root)
    if skipped:
        logger.warning("%d records skipped during ingest", len(skipped))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = [
        (record, i, box, label)
        for record in index.records
        for i, (box, label) in enumerate(record.boxes)
    ]

    # dims are pure arithmetic, so bucket shapes come from a pixel-free pass
    if cfg.bucket_count is not None:
        dims = []
        for record, _, box, _ in tasks:
            expanded = expand_context(
                box, record.image_width, record.image_height, cfg.context_ratio
            )
            factor = record.metadata.gsd / cfg.target_gsd
            dims.append(
                (
                    max(1, transforms.round_half_up(expanded.box.width * factor)),
                    max(1, transforms.round_half_up(expanded.box.height * factor)),
                )
            )
        points = ds.quantile_points(dims, cfg.bucket_count)
        targets = [ds.bucket_dims(ds.nearest_bucket(dim, points)) for dim in dims]
    else:
        targets = [(cfg.rescale_width, cfg.rescale_height)] * len(tasks)

    def process(pair):
        task, target = pair
        return _preprocess_one(task, cfg, target)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(process, zip(tasks, targets)))
    else:
        results = [process(pair) for pair in zip(tasks, targets)]

    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as manifest:
        for (record, box_index, box, label), (expanded, patch) in zip(tasks, results):
            out_id = f"{record.record_id}__b{box_index}"
            filename = f"{out_id}.png"
            write_png(patch, out_dir / filename)
            sidecar = {
                "img_filename": filename,
                "img_width": patch.width,
                "img_height": patch.height,
                "gsd": cfg.target_gsd,
                "timestamp": record.metadata.timestamp.isoformat().replace("+00:00", "Z"),
                "bounding_boxes": [
                    {"category": label.name, "box": [0, 0, patch.width, patch.height]}
                ],
                "features": dict(record.metadata.features),
            }
            with open(out_dir / f"{out_id}.json", "w", encoding="utf-8") as fh:
                json.dump(sidecar, fh)
            manifest.write(
                json.dumps(
                    {
                        "record_id": record.record_id,
                        "box_index": box_index,
                        "file": filename,
                        "category": label.name,
                        "source_box": [box.x, box.y, box.width, box.height],
                        "expanded_box": [
                            expanded.box.x,
                            expanded.box.y,
                            expanded.box.width,
                            expanded.box.height,
                        ],
                        "clamped": expanded.clamped,
                        "width": patch.width,
                        "height": patch.height,
                    }
                )
                + "\n"
            )
    print(f"wrote {len(results)} images to {out_dir}")
    return EXIT_OK


def cmd_augment(args) -> int:
    index, _ = ds.ingest(args.root)
    families = set(args.families.split(",")) if args.families else set(aug.FAMILIES)
    families.discard("")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for record in index.records:
        plan = aug.plan_augmentations(record, families, args.noise_amplitude)
        image = read_image(record.image_path)
        entries.extend(aug.execute_plan(plan, image, out_dir, jobs=args.jobs))
    aug.write_manifest(entries, out_dir / "manifest.jsonl")
    print(f"wrote {len(entries)} augmented images to {out_dir}")
    return EXIT_OK


def cmd_false_dets(args) -> int:
    index, _ = ds.ingest(args.root)
    cfg = aug.FalseDetectionConfig(
        max_overlap_fraction=args.threshold,
        crops_per_image=args.crops_per_image,
        seed=args.seed,
        max_attempts_per_crop=args.max_attempts,
    )
    crops = aug.generate_false_detections(index, cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        for crop in crops:
            fh.write(json.dumps(aug.false_detection_sidecar(crop)) + "\n")
    print(f"wrote {len(crops)} false-detection crops to {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    doc = _load_config_doc(args)
    flags = {
        "batch_size": args.batch_size,
        "sampler_seed": args.seed,
        "guarantee_window": args.window,
    }
    cfg = config_mod.build_pipeline_config(flags, doc).sampler

    index, _ = ds.ingest(args.root)
    stats = ds.compute_stats(index)
    weights = sampler_mod.compute_class_weights(stats.class_frequencies)
    window = cfg.guarantee_window
    if window == "off":
        window = None
    elif isinstance(window, str) and window != "auto":
        window = int(window)
    state = sampler_mod.SamplerState.create(
        weights, cfg.batch_size, window, cfg.seed, cfg.selection
    )
    pools = sampler_mod.records_by_class(index)

    sink = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for n in range(args.batches):
            batch = sampler_mod.sample_batch(state, pools)
            sink.write(json.dumps(batch.manifest_entry(n)) + "\n")
    finally:
        if args.out:
            sink.close()
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = bench_mod.BenchSpec(
        corpus_dir=Path(args.corpus),
        image_count=args.image_count,
        runs=args.runs,
        tests=tuple(args.tests.split(",")),
        backends=tuple(args.backends.split(",")),
        jobs=args.jobs,
    )
    report = bench_mod.run_bench(spec)
    if args.json:
        Path(args.json).write_text(report.to_json(), encoding="utf-8")
    print(report.to_table())
    if report.has_mismatch and not args.allow_mismatch:
        print("output mismatch between backends; timings are not comparable", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_stage_sim(args) -> int:
    doc = config_mod.load_config_file(args.model) if args.model else None
    flags = {"capacity": args.capacity, "prefetch_depth": args.prefetch_depth}
    model = config_mod.build_latency_model(flags, doc)
    cfg = config_mod.build_staging_config(flags, doc)

    if args.trace:
        trace = staging_mod.load_trace(args.trace)
    else:
        trace = staging_mod.default_write_heavy_trace(args.ops)
    if args.emit_trace:
        staging_mod.save_trace(trace, args.emit_trace)

    report = staging_mod.simulate_report(trace, model, cfg)
    payload = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satpipe",
        description="Preprocessing, augmentation, sampling, and staged-I/O "
        "toolkit for heterogeneous satellite imagery.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and info")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="index a dataset directory and validate sidecars")
    p.add_argument("root", help="dataset directory with images and <stem>.json sidecars")
    p.add_argument("--report", help="write skipped-record report as JSON lines")

    p = sub.add_parser("stats", help="print resolution/GSD/class statistics")
    p.add_argument("root")

    p = sub.add_parser(
        "preprocess",
        help="expand context, crop, normalize GSD, and resize every labeled box",
    )
    p.add_argument("root")
    p.add_argument("out", help="output directory for images, sidecars, and manifest.jsonl")
    p.add_argument(
        "--context-ratio",
        type=float,
        default=None,
        help="context ratio for box expansion (default 1.5, the ratio observed "
        "to perform best; 0 disables expansion)",
    )
    p.add_argument(
        "--target-gsd",
        type=float,
        default=None,
        help="target ground sample distance in meters (default 1.0, the unit "
        "scale that keeps rescaling arithmetic simple)",
    )
    p.add_argument(
        "--rescale",
        type=_parse_size,
        default=None,
        metavar="WxH",
        help="fixed output size (default 224x224, the conventional square "
        "nearest the observed 245x196 median resolution)",
    )
    p.add_argument(
        "--buckets",
        type=int,
        default=None,
        help="snap outputs to K quantile resolution buckets instead of one fixed size",
    )
    p.add_argument("--config", help="TOML config file (flags win over file values)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")

    p = sub.add_parser("augment", help="precompute the offline augmentation set")
    p.add_argument("root")
    p.add_argument("out")
    p.add_argument(
        "--families",
        default=None,
        help="comma list from rotations,flips,zooms,noise (default all four, "
        "the full augmentation set)",
    )
    p.add_argument(
        "--noise-amplitude",
        type=int,
        default=aug.DEFAULT_NOISE_AMPLITUDE,
        help="channel noise half-range in 8-bit counts (default 10)",
    )
    p.add_argument("--jobs", type=int, default=1, help="worker threads per plan (default 1)")

    p = sub.add_parser(
        "false-dets", help="generate background crops labeled false_detection"
    )
    p.add_argument("root")
    p.add_argument("out", help="output JSON lines file (sidecar schema)")
    p.add_argument(
        "--threshold",
        type=float,
        default=0.1,
        help="max fraction of a crop's area any labeled box may cover (default 0.1)",
    )
    p.add_argument("--crops-per-image", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-attempts", type=int, default=50)

    p = sub.add_parser("sample", help="emit entropy-weighted class-balanced batches")
    p.add_argument("root")
    p.add_argument("--batches", type=int, default=1, help="number of batch manifests to emit")
    p.add_argument(
        "--batch-size",
        type=int,
        default=None,
        help=f"records per batch (default {config_mod.DEFAULT_BATCH_SIZE})",
    )
    p.add_argument("--seed", type=int, default=None, help="sampler seed (default 0)")
    p.add_argument(
        "--window",
        default=None,
        help="representation guarantee window in batches: auto (ceil(classes/"
        "batch_size), the default), off, or an integer",
    )
    p.add_argument("--config", help="TOML config file (flags win over file values)")
    p.add_argument("--out", help="write batch manifests here instead of stdout")

    p = sub.add_parser("bench", help="time the standard transform pipelines per backend")
    p.add_argument("corpus", help="directory of benchmark images")
    p.add_argument(
        "--image-count",
        type=int,
        default=300,
        help="images per pass (default 300, the standard corpus size)",
    )
    p.add_argument(
        "--runs", type=int, default=5, help="timed passes to average (default 5)"
    )
    p.add_argument("--tests", default="T1,T2,T3", help="comma list of T1,T2,T3")
    p.add_argument(
        "--backends",
        default="reference",
        help=f"comma list of registered backends (available: {','.join(bench_mod.available_backends())})",
    )
    p.add_argument(
        "--allow-mismatch",
        action="store_true",
        help="exit 0 even when backend outputs disagree beyond +/-2 per sample",
    )
    p.add_argument("--json", help="also write the full report as JSON")
    p.add_argument(
        "--jobs",
        type=int,
        default=1,
        help="data-parallel workers; timings are labeled and never mixed with "
        "single-threaded numbers (default 1)",
    )

    p = sub.add_parser(
        "stage-sim", help="simulate direct vs staged execution of a workload trace"
    )
    p.add_argument("--trace", help="workload trace JSON lines (default: built-in write-heavy trace)")
    p.add_argument(
        "--ops",
        type=int,
        default=1000,
        help="op count for the built-in trace when --trace is omitted (default 1000)",
    )
    p.add_argument("--model", help="TOML/JSON file with [latency_model] and [staging] tables")
    p.add_argument(
        "--capacity",
        type=int,
        default=None,
        help="staging capacity in bytes (default 256 MiB, a desk-scale stand-in "
        "for a production RAM disk)",
    )
    p.add_argument(
        "--prefetch-depth",
        type=int,
        default=None,
        help="reader lookahead in blocks (default 4; 0 makes reads synchronous)",
    )
    p.add_argument("--emit-trace", help="also write the simulated trace as JSON lines")
    p.add_argument("--out", help="write the JSON report here as well as stdout")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    try:
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "stats":
            return cmd_stats(args)
        if args.command == "preprocess":
            return cmd_preprocess(args, parser)
        if args.command == "augment":
            return cmd_augment(args)
        if args.command == "false-dets":
            return cmd_false_dets(args)
        if args.command == "sample":
            return cmd_sample(args)
        if args.command == "bench":
            return cmd_bench(args)
        if args.command == "stage-sim":
            return cmd_stage_sim(args)
        parser.error(f"unknown command {args.command!r}")
    except (
        ds.DatasetError,
        GeometryError,
        RasterError,
        transforms.TransformError,
        sampler_mod.SamplerError,
        staging_mod.StagingError,
        bench_mod.BenchError,
        config_mod.ConfigError,
        aug.AugmentError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
