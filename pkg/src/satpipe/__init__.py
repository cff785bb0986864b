"""satpipe: preprocessing, augmentation, sampling, and staged-I/O toolkit
for large heterogeneous satellite-imagery datasets."""

from .augment import (
    AugmentationPlan,
    FalseDetectionConfig,
    NoiseConfig,
    augment_metadata,
    execute_plan,
    generate_false_detections,
    plan_augmentations,
)
from .dataset import (
    CategoryLabel,
    DatasetIndex,
    DatasetStats,
    ImageMetadata,
    ImageRecord,
    bucket_resolutions,
    compute_stats,
    ingest,
)
from .geometry import (
    BoundingBox,
    ContextRatio,
    ExpandedBox,
    crop,
    expand_context,
    gsd_scale_factor,
)
from .raster import RasterImage, read_image, write_png
from .sampler import ClassWeights, SamplerState, compute_class_weights, sample_batch
from .staging import (
    LatencyModel,
    StagingConfig,
    WorkloadTrace,
    run_direct,
    run_staged,
    stream_items,
)
from .transforms import (
    TransformSpec,
    blur,
    channel_noise,
    flip,
    normalize_gsd,
    rescale,
    rotate,
    zoom,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentationPlan",
    "BoundingBox",
    "CategoryLabel",
    "ClassWeights",
    "ContextRatio",
    "DatasetIndex",
    "DatasetStats",
    "ExpandedBox",
    "FalseDetectionConfig",
    "ImageMetadata",
    "ImageRecord",
    "LatencyModel",
    "NoiseConfig",
    "RasterImage",
    "SamplerState",
    "StagingConfig",
    "TransformSpec",
    "WorkloadTrace",
    "augment_metadata",
    "blur",
    "bucket_resolutions",
    "channel_noise",
    "compute_class_weights",
    "compute_stats",
    "crop",
    "execute_plan",
    "expand_context",
    "flip",
    "generate_false_detections",
    "gsd_scale_factor",
    "ingest",
    "normalize_gsd",
    "plan_augmentations",
    "read_image",
    "rescale",
    "rotate",
    "run_direct",
    "run_staged",
    "sample_batch",
    "stream_items",
    "write_png",
    "zoom",
]
