"""Live inference over a frame stream with a bounded ingestion queue.

One ingestion flow pushes decoded frames into a bounded FIFO; one inference
flow drains it, maintains the rolling window, and emits a verdict per frame
once the window is warm. When the producer outruns inference the oldest
queued frame is dropped and counted, so ingestion never blocks.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .dsp import RadarFrame
from .models import CallCounters, ModelBundle, Verdict, infer
from .preprocess import apply_norm, in_any_interval, window_sample

DEFAULT_QUEUE_DEPTH = 16


class BoundedFrameQueue:
    """Thread-safe FIFO that evicts its oldest entry instead of blocking."""

    def __init__(self, depth: int = DEFAULT_QUEUE_DEPTH):
        if depth < 1:
            raise ValueError("queue depth must be at least 1")
        self._items: deque = deque()
        self._depth = depth
        self._lock = threading.Lock()
        self._ready = threading.Condition(self._lock)
        self._closed = False
        self.dropped = 0

    def push(self, frame: RadarFrame) -> None:
        with self._ready:
            if len(self._items) >= self._depth:
                self._items.popleft()
                self.dropped += 1
            self._items.append(frame)
            self._ready.notify()

    def close(self) -> None:
        with self._ready:
            self._closed = True
            self._ready.notify_all()

    def pop(self) -> RadarFrame | None:
        """Next frame, or None once the queue is closed and drained."""
        with self._ready:
            while not self._items and not self._closed:
                self._ready.wait()
            if self._items:
                return self._items.popleft()
            return None


@dataclass
class StreamStats:
    frames_in: int = 0
    frames_dropped: int = 0
    verdicts: int = 0
    suppressed: int = 0
    counters: CallCounters = field(default_factory=CallCounters)
    latencies_ms: list[float] = field(default_factory=list)

    def latency_quantile(self, q: float) -> float:
        if not self.latencies_ms:
            return 0.0
        ordered = sorted(self.latencies_ms)
        return ordered[min(len(ordered) - 1, int(q * len(ordered)))]


def run_stream(frames: Iterable[RadarFrame], bundle: ModelBundle,
               dvn_threshold: float = 0.5,
               bump_intervals: list[tuple[float, float]] | None = None,
               queue_depth: int = DEFAULT_QUEUE_DEPTH,
               on_verdict: Callable[[RadarFrame, Verdict], None] | None = None,
               pace_seconds: float | None = None) -> StreamStats:
    """Consume a frame source through the bounded queue and classify windows.

    A window is bump-flagged (suppressed) when any of its frames falls inside
    a bump interval. Returns ingestion/drop/call counters and per-frame
    inference latencies. ``pace_seconds`` throttles ingestion to one frame per
    interval, emulating live sensor arrival when replaying a capture file; a
    live source needs no pacing because arrival itself is timed.
    """
    if bundle.norm_stats is None:
        raise ValueError("bundle has no normalisation statistics")
    window = bundle.window
    bumps = bump_intervals or []
    queue = BoundedFrameQueue(queue_depth)
    stats = StreamStats()

    def ingest() -> None:
        for frame in frames:
            if pace_seconds:
                time.sleep(pace_seconds)
            stats.frames_in += 1
            queue.push(frame)
        queue.close()

    producer = threading.Thread(target=ingest, name="frame-ingest", daemon=True)
    producer.start()

    rolling: deque = deque(maxlen=window)
    while True:
        frame = queue.pop()
        if frame is None:
            break
        rolling.append(frame)
        if len(rolling) < window:
            continue
        t0 = time.perf_counter()
        chunk = list(rolling)
        bump_flag = any(in_any_interval(f.timestamp, bumps) for f in chunk)
        if bump_flag:
            verdict = infer(bundle, window_sample(chunk), dvn_threshold,
                            bump_flag=True, counters=stats.counters)
            stats.suppressed += 1
        else:
            sample = apply_norm(window_sample(chunk), bundle.norm_stats)
            verdict = infer(bundle, sample, dvn_threshold,
                            bump_flag=False, counters=stats.counters)
        stats.latencies_ms.append((time.perf_counter() - t0) * 1e3)
        stats.verdicts += 1
        if on_verdict is not None:
            on_verdict(frame, verdict)
    producer.join()
    stats.frames_dropped = queue.dropped
    return stats
