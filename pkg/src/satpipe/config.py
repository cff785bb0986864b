"""Pipeline configuration: documented defaults, TOML config files, and the
flag > file > default precedence rule.

Defaults: context ratio 1.5 (the expansion found to perform best), target
GSD 1.0 m (a unit scale that keeps the arithmetic simple), and a 224x224
output square (the conventional size nearest the observed median
resolution of 245x196).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .augment import FAMILIES, NoiseConfig
from .staging import LatencyModel, StagingConfig

DEFAULT_CONTEXT_RATIO = 1.5
DEFAULT_TARGET_GSD = 1.0
DEFAULT_RESCALE = (224, 224)
DEFAULT_BATCH_SIZE = 32


class ConfigError(ValueError):
    """Raised for unreadable or ill-typed configuration files."""


@dataclass(frozen=True)
class SamplerSettings:
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    guarantee_window: int | str | None = "auto"
    selection: str = "with_replacement"


@dataclass(frozen=True)
class PipelineConfig:
    context_ratio: float = DEFAULT_CONTEXT_RATIO
    target_gsd: float = DEFAULT_TARGET_GSD
    rescale_width: int = DEFAULT_RESCALE[0]
    rescale_height: int = DEFAULT_RESCALE[1]
    bucket_count: int | None = None
    families: tuple[str, ...] = FAMILIES
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    sampler: SamplerSettings = field(default_factory=SamplerSettings)
    staging: StagingConfig = field(default_factory=StagingConfig)
    latency: LatencyModel = field(default_factory=LatencyModel)


def resolve(flag_value: Any, file_value: Any, default: Any) -> Any:
    """Three-level precedence: an explicit flag wins, then the config file,
    then the built-in default."""
    if flag_value is not None:
        return flag_value
    if file_value is not None:
        return file_value
    return default


def load_config_file(path: str | Path) -> dict:
    """Parse a TOML (or JSON) config document into a plain dict."""
    path = Path(path)
    try:
        raw = path.read_bytes()
        if path.suffix.lower() == ".json":
            return json.loads(raw.decode("utf-8"))
        return tomllib.loads(raw.decode("utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (ValueError, OSError) as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc


def _section(doc: dict | None, name: str) -> dict:
    if not doc:
        return {}
    section = doc.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config section [{name}] must be a table")
    return section


def build_pipeline_config(flags: dict, doc: dict | None = None) -> PipelineConfig:
    """Merge flag values (None = not given) with a parsed config document.

    Recognized sections: [pipeline], [noise], [sampler], [staging],
    [latency_model].
    """
    pipeline = _section(doc, "pipeline")
    noise = _section(doc, "noise")
    sampler = _section(doc, "sampler")

    families = resolve(flags.get("families"), pipeline.get("families"), list(FAMILIES))
    return PipelineConfig(
        context_ratio=float(
            resolve(flags.get("context_ratio"), pipeline.get("context_ratio"), DEFAULT_CONTEXT_RATIO)
        ),
        target_gsd=float(
            resolve(flags.get("target_gsd"), pipeline.get("target_gsd"), DEFAULT_TARGET_GSD)
        ),
        rescale_width=int(
            resolve(flags.get("rescale_width"), pipeline.get("rescale_width"), DEFAULT_RESCALE[0])
        ),
        rescale_height=int(
            resolve(flags.get("rescale_height"), pipeline.get("rescale_height"), DEFAULT_RESCALE[1])
        ),
        bucket_count=resolve(flags.get("bucket_count"), pipeline.get("bucket_count"), None),
        families=tuple(families),
        noise=NoiseConfig(
            feature_noise_half_width=float(
                resolve(
                    flags.get("feature_noise_half_width"),
                    noise.get("feature_noise_half_width"),
                    NoiseConfig.feature_noise_half_width,
                )
            ),
            time_of_day_jitter=int(
                resolve(
                    flags.get("time_of_day_jitter"),
                    noise.get("time_of_day_jitter"),
                    NoiseConfig.time_of_day_jitter,
                )
            ),
            day_of_year_jitter=int(
                resolve(
                    flags.get("day_of_year_jitter"),
                    noise.get("day_of_year_jitter"),
                    NoiseConfig.day_of_year_jitter,
                )
            ),
            seed=int(resolve(flags.get("noise_seed"), noise.get("seed"), NoiseConfig.seed)),
        ),
        sampler=SamplerSettings(
            batch_size=int(
                resolve(flags.get("batch_size"), sampler.get("batch_size"), DEFAULT_BATCH_SIZE)
            ),
            seed=int(resolve(flags.get("sampler_seed"), sampler.get("seed"), 0)),
            guarantee_window=resolve(
                flags.get("guarantee_window"), sampler.get("guarantee_window"), "auto"
            ),
            selection=resolve(
                flags.get("selection"), sampler.get("selection"), "with_replacement"
            ),
        ),
        staging=build_staging_config(flags, doc),
        latency=build_latency_model(flags, doc),
    )


def build_latency_model(flags: dict, doc: dict | None = None) -> LatencyModel:
    section = _section(doc, "latency_model")
    defaults = LatencyModel()
    kwargs = {}
    for name in defaults.to_dict():
        kwargs[name] = resolve(flags.get(name), section.get(name), getattr(defaults, name))
    kwargs["block_size"] = int(kwargs["block_size"])
    return LatencyModel(**kwargs)


def build_staging_config(flags: dict, doc: dict | None = None) -> StagingConfig:
    section = _section(doc, "staging")
    defaults = StagingConfig()
    return StagingConfig(
        capacity=int(resolve(flags.get("capacity"), section.get("capacity"), defaults.capacity)),
        prefetch_depth=int(
            resolve(
                flags.get("prefetch_depth"), section.get("prefetch_depth"), defaults.prefetch_depth
            )
        ),
    )
