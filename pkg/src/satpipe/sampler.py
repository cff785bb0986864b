"""Class-balanced batch sampling with entropy weighting and a windowed
representation guarantee.

Classes are drawn with probability proportional to ``p * ln(1/p)`` where
``p`` is the class frequency, which damps dominant classes and boosts
mid-frequency ones. On top of the weighted draw, any class about to go
``guarantee_window`` batches without appearing is force-included, so every
positive-weight class appears at least once in every window of consecutive
batches.

The weighted draw consumes the documented splitmix64 stream: one uniform
per free slot (classes ordered by ascending id in the cumulative
distribution), then one ``randint`` per chosen class to pick the record.
"""

from __future__ import annotations

import json
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Mapping, Sequence

from .dataset import CategoryLabel, DatasetIndex
from .rng import SplitMix64

logger = logging.getLogger(__name__)

FREQUENCY_SUM_TOLERANCE = 1e-6


class SamplerError(ValueError):
    """Raised for invalid frequencies or an unsatisfiable sampler setup."""


@dataclass(frozen=True)
class ClassWeights:
    """Normalized per-class sampling probabilities keyed by class id."""

    weights: dict[int, float]

    def positive_ids(self) -> list[int]:
        return sorted(cid for cid, w in self.weights.items() if w > 0)


def _as_id(key: CategoryLabel | int) -> int:
    return key.id if isinstance(key, CategoryLabel) else int(key)


def compute_class_weights(
    frequencies: Mapping[CategoryLabel | int, float],
) -> ClassWeights:
    """Entropy-weight class frequencies: raw_j = p_j * ln(1/p_j), normalized.

    Zero-frequency classes get weight exactly 0. If all mass sits on one
    class the raw weights vanish, and the weights fall back to uniform over
    the positive-frequency classes.
    """
    freqs = {_as_id(k): float(v) for k, v in frequencies.items()}
    if any(p < 0 for p in freqs.values()):
        raise SamplerError("frequencies must be nonnegative")
    total = sum(freqs.values())
    if abs(total - 1.0) > FREQUENCY_SUM_TOLERANCE:
        raise SamplerError(f"frequencies sum to {total}, expected 1")

    raw = {cid: (p * math.log(1.0 / p) if p > 0 else 0.0) for cid, p in freqs.items()}
    denom = sum(raw.values())
    if denom == 0.0:
        positive = [cid for cid, p in freqs.items() if p > 0]
        return ClassWeights(
            {cid: (1.0 / len(positive) if p > 0 else 0.0) for cid, p in freqs.items()}
        )
    return ClassWeights({cid: r / denom for cid, r in raw.items()})


def records_by_class(index: DatasetIndex) -> dict[int, list[str]]:
    """Map class id -> record ids containing at least one box of that class."""
    mapping: dict[int, list[str]] = {}
    for record in index.records:
        seen: set[int] = set()
        for _, label in record.boxes:
            if label.id not in seen:
                seen.add(label.id)
                mapping.setdefault(label.id, []).append(record.record_id)
    return mapping


@dataclass
class SamplerState:
    """Single-owner mutable sampling state; serializable for checkpointing.

    ``guarantee_window`` of None disables forcing (pure weighted draws).
    ``selection`` is "with_replacement" (oversampling, the default) or
    "without_replacement" (each class cycles through its records before any
    repeat).
    """

    weights: ClassWeights
    batch_size: int
    guarantee_window: int | None
    last_seen: dict[int, int]
    rng: SplitMix64
    selection: str = "with_replacement"
    remaining: dict[int, list[int]] | None = None

    @classmethod
    def create(
        cls,
        weights: ClassWeights,
        batch_size: int,
        guarantee_window: int | str | None = "auto",
        seed: int = 0,
        selection: str = "with_replacement",
    ) -> "SamplerState":
        if batch_size < 1:
            raise SamplerError(f"batch size must be >= 1, got {batch_size}")
        if selection not in ("with_replacement", "without_replacement"):
            raise SamplerError(f"unknown selection mode {selection!r}")
        positive = weights.positive_ids()
        if not positive:
            raise SamplerError("no class has positive weight")
        if guarantee_window == "auto":
            guarantee_window = max(1, math.ceil(len(positive) / batch_size))
        if guarantee_window is not None and guarantee_window < 1:
            raise SamplerError(f"guarantee window must be >= 1, got {guarantee_window}")
        return cls(
            weights=weights,
            batch_size=batch_size,
            guarantee_window=guarantee_window,
            last_seen={cid: 0 for cid in positive},
            rng=SplitMix64(seed),
            selection=selection,
            remaining={} if selection == "without_replacement" else None,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "weights": {str(cid): w for cid, w in self.weights.weights.items()},
                "batch_size": self.batch_size,
                "guarantee_window": self.guarantee_window,
                "last_seen": {str(cid): n for cid, n in self.last_seen.items()},
                "rng_state": self.rng.state,
                "selection": self.selection,
                "remaining": (
                    {str(cid): idxs for cid, idxs in self.remaining.items()}
                    if self.remaining is not None
                    else None
                ),
            }
        )

    @classmethod
    def from_json(cls, raw: str) -> "SamplerState":
        doc = json.loads(raw)
        rng = SplitMix64(0)
        rng.state = int(doc["rng_state"])
        remaining = doc.get("remaining")
        return cls(
            weights=ClassWeights({int(k): v for k, v in doc["weights"].items()}),
            batch_size=int(doc["batch_size"]),
            guarantee_window=doc["guarantee_window"],
            last_seen={int(k): v for k, v in doc["last_seen"].items()},
            rng=rng,
            selection=doc.get("selection", "with_replacement"),
            remaining=(
                {int(k): list(v) for k, v in remaining.items()}
                if remaining is not None
                else None
            ),
        )


@dataclass(frozen=True)
class SampledBatch:
    items: list[str]
    forced: list[int]

    def manifest_entry(self, batch_number: int) -> dict:
        return {"batch": batch_number, "items": self.items, "forced": self.forced}


def _draw_class(state: SamplerState, ordered_ids: list[int], cumulative: list[float]) -> int:
    u = state.rng.uniform() * cumulative[-1]
    return ordered_ids[min(bisect_right(cumulative, u), len(ordered_ids) - 1)]


def sample_batch(
    state: SamplerState,
    index: DatasetIndex | Mapping[int, Sequence[str]],
) -> SampledBatch:
    """Draw one batch of record ids, mutating the state.

    Classes one batch away from violating the guarantee are force-included
    first, in ascending class-id order; remaining slots are i.i.d. weighted
    draws. Records are picked uniformly with replacement within each class.
    If the forced classes alone exceed the batch, the longest-starved
    classes fill it entirely (warned).
    """
    pools = index if isinstance(index, Mapping) else records_by_class(index)
    positive = state.weights.positive_ids()
    missing = [cid for cid in positive if not pools.get(cid)]
    if missing:
        raise SamplerError(f"no records for positive-weight classes {missing}")

    forced: list[int] = []
    if state.guarantee_window is not None:
        forced = sorted(
            cid
            for cid in positive
            if state.last_seen[cid] >= state.guarantee_window - 1
        )
        if len(forced) > state.batch_size:
            logger.warning(
                "%d classes need forcing but batch size is %d; batch holds only the longest-starved",
                len(forced),
                state.batch_size,
            )
            forced.sort(key=lambda cid: (-state.last_seen[cid], cid))
            forced = sorted(forced[: state.batch_size])

    chosen = list(forced)
    free_slots = state.batch_size - len(chosen)
    if free_slots > 0:
        cumulative: list[float] = []
        acc = 0.0
        for cid in positive:
            acc += state.weights.weights[cid]
            cumulative.append(acc)
        for _ in range(free_slots):
            chosen.append(_draw_class(state, positive, cumulative))

    items = []
    for cid in chosen:
        pool = pools[cid]
        if state.selection == "without_replacement":
            assert state.remaining is not None
            left = state.remaining.setdefault(cid, [])
            if not left:
                left.extend(range(len(pool)))
            items.append(pool[left.pop(state.rng.randint(0, len(left) - 1))])
        else:
            items.append(pool[state.rng.randint(0, len(pool) - 1)])

    chosen_set = set(chosen)
    for cid in positive:
        state.last_seen[cid] = 0 if cid in chosen_set else state.last_seen[cid] + 1

    return SampledBatch(items=items, forced=forced)
