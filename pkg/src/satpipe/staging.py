"""Staged streaming pipeline: sequential block reads from a slow store into
a bounded staging area, heavy create/delete work in staging, immediate
eviction — plus a deterministic latency simulator that quantifies the win
over running the same workload directly against the slow store.

Simulator accounting rules (the contract; an independent oracle can be
written from this paragraph alone):

* A workload trace is an ordered op list. ``create``/``delete`` name items;
  ``read`` of an item never created in the trace is a *source read* (slow
  store), ``read`` of a live created item is a *staging read*.
* ``run_direct`` charges every op the slow store's random-access latency
  for its kind and sums.
* ``run_staged`` simulates one worker executing ops in order plus one
  prefetching reader. Each source-read item is fetched as
  ``ceil(bytes / block_size)`` sequential blocks, one block per
  ``sequential_block_latency``, strictly in op order. Block ``g`` may start
  once the reader is free, at most ``prefetch_depth`` blocks ahead of
  consumption (block ``g`` waits for block ``g - depth`` to be consumed,
  except blocks of the item currently being assembled, which always
  proceed), and only when staging has room (block bytes reserve space at
  fetch start; the reader stalls otherwise until an eviction frees room).
  With depth 0 a block may not start before the worker requests its item.
* The worker charges nothing for a source read: it waits for the item's
  last block, and the item's bytes leave staging at that instant
  (immediate eviction). Staging reads, creates, and deletes advance the
  worker clock by their staging latencies; created bytes occupy staging
  from op completion until their delete. Total time is the worker clock
  after the last op. Simultaneous events resolve evictions before
  reservations.

With staging latencies set equal to the slow store's, ``block_size`` equal
to the item size, and ``prefetch_depth = 0``, the staged and direct totals
coincide exactly: the model degenerates to the slow store.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .rng import SplitMix64

logger = logging.getLogger(__name__)

KIB = 1024
MIB = 1024 * 1024

DEFAULT_RANDOM_READ_S = 2e-3
DEFAULT_RANDOM_CREATE_S = 20e-3
DEFAULT_RANDOM_DELETE_S = 20e-3
SEQUENTIAL_SPEEDUP = 100.0
STAGING_SPEEDUP = 1000.0


class StagingError(ValueError):
    """Raised for invalid traces, capacity violations, or staging deadlock."""


@dataclass(frozen=True)
class LatencyModel:
    """Per-op latencies for the slow store and the staging area.

    Defaults encode the observed ratios: sequential block reads at 1/100 of
    the random-read latency and staging operations at 1/1000 of their
    slow-store counterparts.
    """

    random_read_latency: float = DEFAULT_RANDOM_READ_S
    sequential_block_latency: float = DEFAULT_RANDOM_READ_S / SEQUENTIAL_SPEEDUP
    random_create_latency: float = DEFAULT_RANDOM_CREATE_S
    random_delete_latency: float = DEFAULT_RANDOM_DELETE_S
    block_size: int = 1 * MIB
    staging_read_latency: float = DEFAULT_RANDOM_READ_S / STAGING_SPEEDUP
    staging_create_latency: float = DEFAULT_RANDOM_CREATE_S / STAGING_SPEEDUP
    staging_delete_latency: float = DEFAULT_RANDOM_DELETE_S / STAGING_SPEEDUP

    def __post_init__(self):
        for name in (
            "random_read_latency",
            "sequential_block_latency",
            "random_create_latency",
            "random_delete_latency",
            "staging_read_latency",
            "staging_create_latency",
            "staging_delete_latency",
        ):
            if getattr(self, name) < 0:
                raise StagingError(f"{name} must be >= 0")
        if self.block_size < 1:
            raise StagingError("block_size must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "LatencyModel":
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "random_read_latency": self.random_read_latency,
            "sequential_block_latency": self.sequential_block_latency,
            "random_create_latency": self.random_create_latency,
            "random_delete_latency": self.random_delete_latency,
            "block_size": self.block_size,
            "staging_read_latency": self.staging_read_latency,
            "staging_create_latency": self.staging_create_latency,
            "staging_delete_latency": self.staging_delete_latency,
        }


@dataclass(frozen=True)
class StagingConfig:
    """Bounded staging area: capacity in bytes, reader lookahead in blocks.

    Eviction policy is fixed: an item leaves staging the moment it is
    consumed.
    """

    capacity: int = 256 * MIB
    prefetch_depth: int = 4
    eviction: str = "immediate"

    def __post_init__(self):
        if self.capacity < 1:
            raise StagingError("capacity must be >= 1 byte")
        if self.prefetch_depth < 0:
            raise StagingError("prefetch_depth must be >= 0")
        if self.eviction != "immediate":
            raise StagingError(f"unsupported eviction policy {self.eviction!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "StagingConfig":
        return cls(**data)


@dataclass(frozen=True)
class TraceOp:
    op: str
    item: str
    nbytes: int = 0

    def __post_init__(self):
        if self.op not in ("read", "create", "delete"):
            raise StagingError(f"unknown op {self.op!r}")
        if self.nbytes < 0:
            raise StagingError(f"negative size for {self.item!r}")


@dataclass(frozen=True)
class WorkloadTrace:
    ops: tuple[TraceOp, ...]

    def __len__(self) -> int:
        return len(self.ops)

    def validate(self) -> list[int]:
        """Check referential integrity; returns per-read source/staged flags.

        Result[i] is the size of op i's item, and for reads a negative size
        marks a staging read (of a live created item). Deletes must target
        live created items; source reads must carry a positive size.
        """
        live: dict[str, int] = {}
        sizes: list[int] = []
        for i, op in enumerate(self.ops):
            if op.op == "create":
                if op.nbytes < 1:
                    raise StagingError(f"op {i}: create of {op.item!r} needs a positive size")
                if op.item in live:
                    raise StagingError(f"op {i}: create of live item {op.item!r}")
                live[op.item] = op.nbytes
                sizes.append(op.nbytes)
            elif op.op == "delete":
                if op.item not in live:
                    raise StagingError(f"op {i}: delete of unknown item {op.item!r}")
                sizes.append(live.pop(op.item))
            else:
                if op.item in live:
                    sizes.append(-live[op.item])
                else:
                    if op.nbytes < 1:
                        raise StagingError(
                            f"op {i}: source read of {op.item!r} needs a positive size"
                        )
                    sizes.append(op.nbytes)
        return sizes


def load_trace(path: str | Path) -> WorkloadTrace:
    ops = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            ops.append(TraceOp(op=doc["op"], item=doc["item"], nbytes=int(doc.get("bytes", 0))))
    return WorkloadTrace(tuple(ops))


def save_trace(trace: WorkloadTrace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for op in trace.ops:
            doc: dict = {"op": op.op, "item": op.item}
            if op.nbytes:
                doc["bytes"] = op.nbytes
            fh.write(json.dumps(doc) + "\n")


def default_write_heavy_trace(ops: int = 1000, seed: int = 7) -> WorkloadTrace:
    """The published default trace: repeated stage-in / temp-churn groups.

    Each group is: source read, two temp creates, one staging re-read of the
    first temp, then both deletes. Sizes are drawn deterministically from
    the documented splitmix64 stream (source bytes in [128 KiB, 1 MiB],
    temp bytes in [32 KiB, 256 KiB]); the sequence is truncated to ``ops``.
    """
    gen = SplitMix64(seed)
    out: list[TraceOp] = []
    group = 0
    while len(out) < ops:
        src = f"src{group:05d}"
        t1 = f"tmp{group:05d}a"
        t2 = f"tmp{group:05d}b"
        out.append(TraceOp("read", src, gen.randint(128 * KIB, 1 * MIB)))
        out.append(TraceOp("create", t1, gen.randint(32 * KIB, 256 * KIB)))
        out.append(TraceOp("create", t2, gen.randint(32 * KIB, 256 * KIB)))
        out.append(TraceOp("read", t1))
        out.append(TraceOp("delete", t1))
        out.append(TraceOp("delete", t2))
        group += 1
    return WorkloadTrace(tuple(out[:ops]))


def run_direct(trace: WorkloadTrace, model: LatencyModel) -> float:
    """Total seconds with every op at the slow store's random-access rates."""
    trace.validate()
    charge = {
        "read": model.random_read_latency,
        "create": model.random_create_latency,
        "delete": model.random_delete_latency,
    }
    return sum(charge[op.op] for op in trace.ops)


@dataclass(frozen=True)
class StagedResult:
    total_s: float
    peak_staging_bytes: int
    reader_stalls: int


class _Timeline:
    """Byte add/remove events from the reader and the worker.

    Reader reservations and worker creates each arrive in nondecreasing
    time order but interleave arbitrarily with each other, so they live in
    separate prefix-summed lists. Removals all happen at worker times.
    """

    def __init__(self):
        self.reader_times: list[float] = []
        self.reader_sums: list[int] = [0]
        self.worker_times: list[float] = []
        self.worker_sums: list[int] = [0]
        self.rm_times: list[float] = []
        self.rm_sums: list[int] = [0]

    def add_reader(self, t: float, nbytes: int) -> None:
        self.reader_times.append(t)
        self.reader_sums.append(self.reader_sums[-1] + nbytes)

    def add_worker(self, t: float, nbytes: int) -> None:
        self.worker_times.append(t)
        self.worker_sums.append(self.worker_sums[-1] + nbytes)

    def remove(self, t: float, nbytes: int) -> None:
        self.rm_times.append(t)
        self.rm_sums.append(self.rm_sums[-1] + nbytes)

    def occupancy_at(self, t: float) -> int:
        added = self.reader_sums[bisect_right(self.reader_times, t)]
        added += self.worker_sums[bisect_right(self.worker_times, t)]
        removed = self.rm_sums[bisect_right(self.rm_times, t)]
        return added - removed

    def next_removal_after(self, t: float) -> float | None:
        i = bisect_right(self.rm_times, t)
        return self.rm_times[i] if i < len(self.rm_times) else None

    def peak(self) -> int:
        # occupancy only rises at add events; removals at the same instant
        # apply first, which occupancy_at already honors
        times = self.reader_times + self.worker_times
        return max((self.occupancy_at(t) for t in times), default=0)


def run_staged(
    trace: WorkloadTrace, model: LatencyModel, cfg: StagingConfig
) -> StagedResult:
    """Simulate the staged pipeline; see the module docstring for the rules."""
    sizes = trace.validate()

    for i, op in enumerate(trace.ops):
        if op.op == "create" and op.nbytes > cfg.capacity:
            raise StagingError(f"op {i}: item {op.item!r} exceeds staging capacity")
        if op.op == "read" and sizes[i] > cfg.capacity:
            raise StagingError(f"op {i}: item {op.item!r} exceeds staging capacity")

    timeline = _Timeline()
    consume_times: list[float] = []  # per fetched block, set at consumption
    reader_clock = 0.0
    stalls = 0
    worker = 0.0

    def fetch_item(nbytes: int, request_time: float) -> float:
        """Fetch one source item; returns the last block's arrival time."""
        nonlocal reader_clock, stalls
        first_block = len(consume_times)
        n_blocks = math.ceil(nbytes / model.block_size)
        arrival = reader_clock
        for b in range(n_blocks):
            g = first_block + b
            block_bytes = min(model.block_size, nbytes - b * model.block_size)
            start = reader_clock
            if cfg.prefetch_depth == 0:
                start = max(start, request_time)
            else:
                gated = g - cfg.prefetch_depth
                if 0 <= gated < first_block:  # own item's blocks are exempt
                    start = max(start, consume_times[gated])
            waited = False
            while timeline.occupancy_at(start) + block_bytes > cfg.capacity:
                nxt = timeline.next_removal_after(start)
                if nxt is None:
                    raise StagingError(
                        "staging deadlock: capacity cannot admit the next block"
                    )
                start = nxt
                waited = True
            if waited:
                stalls += 1
            timeline.add_reader(start, block_bytes)
            arrival = start + model.sequential_block_latency
            reader_clock = arrival
            consume_times.append(math.inf)  # placeholder until consumed
        return arrival

    # arrivals are computed lazily, when the worker reaches each source
    # read: every gate for those blocks is determined by already-simulated
    # events (earlier consumptions, creates, and deletes)
    block_cursor = 0
    for i, op in enumerate(trace.ops):
        if op.op == "read":
            if sizes[i] < 0:  # staging read of a live created item
                worker += model.staging_read_latency
            else:
                last_arrival = fetch_item(sizes[i], worker)
                worker = max(worker, last_arrival)
                for g in range(block_cursor, len(consume_times)):
                    consume_times[g] = worker
                block_cursor = len(consume_times)
                timeline.remove(worker, sizes[i])
        elif op.op == "create":
            worker += model.staging_create_latency
            if timeline.occupancy_at(worker) + op.nbytes > cfg.capacity:
                raise StagingError(
                    f"op {i}: create of {op.item!r} overflows staging capacity"
                )
            timeline.add_worker(worker, op.nbytes)
        else:
            worker += model.staging_delete_latency
            timeline.remove(worker, sizes[i])

    peak = timeline.peak()
    if peak > cfg.capacity:
        # prefetched blocks raced a later create past the capacity; the
        # trace's working set does not fit the staging area
        raise StagingError(
            f"staging capacity exceeded: working set peaks at {peak} bytes"
        )
    return StagedResult(
        total_s=worker,
        peak_staging_bytes=peak,
        reader_stalls=stalls,
    )


def simulate_report(
    trace: WorkloadTrace, model: LatencyModel, cfg: StagingConfig
) -> dict:
    """Direct-vs-staged comparison as the standard report dict."""
    direct = run_direct(trace, model)
    staged = run_staged(trace, model, cfg)
    return {
        "direct_s": direct,
        "staged_s": staged.total_s,
        "speedup": (direct / staged.total_s) if staged.total_s > 0 else math.inf,
        "peak_staging_bytes": staged.peak_staging_bytes,
        "stalls": staged.reader_stalls,
    }


@dataclass
class StreamReport:
    items_processed: int = 0
    items_failed: list[tuple[str, str]] = field(default_factory=list)
    reader_stalls: int = 0
    peak_occupancy_bytes: int = 0


class _BoundedStage:
    """Thread-safe byte-bounded hand-off buffer with stall accounting."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.occupancy = 0
        self.peak = 0
        self.stalls = 0
        self.queue: deque = deque()
        self.cond = threading.Condition()
        self.closed = False

    def put(self, item_id: str, payload, nbytes: int) -> None:
        if nbytes > self.capacity:
            raise StagingError(f"item {item_id!r} exceeds staging capacity")
        with self.cond:
            if self.occupancy + nbytes > self.capacity:
                self.stalls += 1
                while self.occupancy + nbytes > self.capacity:
                    self.cond.wait()
            self.occupancy += nbytes
            self.peak = max(self.peak, self.occupancy)
            self.queue.append((item_id, payload, nbytes))
            self.cond.notify_all()

    def get(self):
        with self.cond:
            while not self.queue and not self.closed:
                self.cond.wait()
            if self.queue:
                return self.queue.popleft()
            return None

    def release(self, nbytes: int) -> None:
        with self.cond:
            self.occupancy -= nbytes
            self.cond.notify_all()

    def close(self) -> None:
        with self.cond:
            self.closed = True
            self.cond.notify_all()


def stream_items(
    source: Iterable[tuple[str, bytes]],
    cfg: StagingConfig,
    consumer: Callable[[str, object], None],
    consumers: int = 1,
    staging_dir: str | Path | None = None,
) -> StreamReport:
    """Stream (item_id, payload) pairs through a bounded staging buffer.

    One sequential reader (the calling thread) pulls from ``source`` and
    fills the buffer up to ``cfg.capacity`` bytes; ``consumers`` worker
    threads invoke the callback and release each item's bytes immediately
    after it returns. A consumer exception marks the item failed and
    streaming continues.

    If ``staging_dir`` (or the SATPIPE_STAGING_DIR environment variable) is
    set, payloads are staged as files in that directory and the callback
    receives the file path instead of the bytes; the file is removed after
    the callback returns.
    """
    if consumers < 1:
        raise StagingError("need at least one consumer")
    if staging_dir is None:
        staging_dir = os.environ.get("SATPIPE_STAGING_DIR") or None
    stage_path = Path(staging_dir) if staging_dir is not None else None
    if stage_path is not None:
        stage_path.mkdir(parents=True, exist_ok=True)

    stage = _BoundedStage(cfg.capacity)
    report = StreamReport()
    lock = threading.Lock()

    def consume_loop():
        while True:
            entry = stage.get()
            if entry is None:
                return
            item_id, payload, nbytes = entry
            try:
                consumer(item_id, payload)
            except Exception as exc:  # consumer bugs must not kill the stream
                with lock:
                    report.items_failed.append((item_id, repr(exc)))
            else:
                with lock:
                    report.items_processed += 1
            finally:
                if stage_path is not None:
                    Path(payload).unlink(missing_ok=True)
                stage.release(nbytes)

    threads = [threading.Thread(target=consume_loop, daemon=True) for _ in range(consumers)]
    for thread in threads:
        thread.start()
    try:
        for item_id, payload in source:
            nbytes = len(payload)
            if stage_path is not None:
                file_path = stage_path / item_id
                file_path.write_bytes(payload)
                stage.put(item_id, str(file_path), nbytes)
            else:
                stage.put(item_id, payload, nbytes)
    finally:
        stage.close()
        for thread in threads:
            thread.join()

    report.reader_stalls = stage.stalls
    report.peak_occupancy_bytes = stage.peak
    return report
