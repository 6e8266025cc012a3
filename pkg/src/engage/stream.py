"""Soft real-time streaming inference.

Keeps the last w frame features in a ring buffer and emits one engagement
score per incoming frame once the buffer is warm. A bounded producer/consumer
feed with a configurable overload policy covers the live-capture case.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass

import numpy as np

from .backbone import Backbone
from .dataset import preprocess_frame
from .errors import EmptyStats, ModelNotLoaded
from .model import ModelParams, forward_batch


@dataclass(frozen=True)
class EngagementScore:
    value: float
    frame_index: int
    wall_latency_ms: float


@dataclass(frozen=True)
class LatencyReport:
    p50_ms: float
    p95_ms: float
    max_ms: float
    throughput_fps: float


class StreamState:
    """Owns the ring buffer, the loaded model and rolling latency stats."""

    def __init__(self, model: ModelParams, backbone: Backbone, w: int):
        if model is None or backbone is None:
            raise ModelNotLoaded("stream needs a model and a backbone")
        self.model = model
        self.backbone = backbone
        self.w = w
        self._window: list[np.ndarray] = []
        self.frames_seen = 0
        self._latencies_ms: list[float] = []
        self._t_first: float | None = None
        self._t_last: float | None = None
        self._lock = threading.Lock()

    def push_frame(self, frame: np.ndarray, frame_index: int | None = None) -> EngagementScore | None:
        """Preprocess a raw frame, extract features, score when warm.

        `frame_index` labels the emitted score; it defaults to the count of
        frames this state has consumed, but a feed that drops frames passes
        the source index so scores always name their true frame.
        """
        t0 = time.perf_counter()
        prepped = preprocess_frame(frame)
        fv = self.backbone.features_for_frame(
            prepped, frame_index=self.frames_seen
        )
        return self._push(fv.values, t0, frame_index)

    def push_features(self, features: np.ndarray, frame_index: int | None = None) -> EngagementScore | None:
        """Feature-level entry point for precomputed or synthetic streams."""
        return self._push(np.asarray(features), time.perf_counter(), frame_index)

    def _push(self, features: np.ndarray, t0: float, frame_index: int | None = None) -> EngagementScore | None:
        if frame_index is None:
            frame_index = self.frames_seen
        self.frames_seen += 1
        self._window.append(features)
        if len(self._window) > self.w:
            self._window.pop(0)  # FIFO eviction
        score = None
        if len(self._window) == self.w:
            X = np.stack(self._window)[None]
            y, _ = forward_batch(self.model, X)
            score = float(y[0])
        t1 = time.perf_counter()
        with self._lock:
            if self._t_first is None:
                self._t_first = t0
            self._t_last = t1
            self._latencies_ms.append((t1 - t0) * 1e3)
        if score is None:
            return None
        return EngagementScore(
            value=score,
            frame_index=frame_index,
            wall_latency_ms=(t1 - t0) * 1e3,
        )

    def latency_report(self) -> LatencyReport:
        with self._lock:
            lats = list(self._latencies_ms)
            t_first, t_last = self._t_first, self._t_last
        if not lats:
            raise EmptyStats("no frames pushed")
        arr = np.array(lats)
        span = max(t_last - t_first, 1e-12)
        return LatencyReport(
            p50_ms=float(np.percentile(arr, 50)),
            p95_ms=float(np.percentile(arr, 95)),
            max_ms=float(arr.max()),
            throughput_fps=len(lats) / span,
        )


@dataclass
class FeedStats:
    pushed: int = 0
    dropped: int = 0


class FrameFeed:
    """Bounded producer/consumer bridge in front of a StreamState.

    `policy` is "drop-oldest" (default: favor fresh frames under overload)
    or "block". Frames are submitted with their indices so emitted scores
    always name the frame they came from.
    """

    def __init__(self, state: StreamState, capacity: int = 8, policy: str = "drop-oldest"):
        if policy not in ("drop-oldest", "block"):
            raise ValueError(f"unknown policy {policy!r}")
        self.state = state
        self.policy = policy
        self.stats = FeedStats()
        self._queue: queue.Queue = queue.Queue(maxsize=capacity)
        self._scores: list[EngagementScore] = []
        self._done = threading.Event()
        self._next_index = 0
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    def submit(self, frame: np.ndarray) -> None:
        item = (self._next_index, frame)
        self._next_index += 1
        if self.policy == "block":
            self._queue.put(item)
        else:
            while True:
                try:
                    self._queue.put_nowait(item)
                    break
                except queue.Full:
                    try:
                        self._queue.get_nowait()
                        self.stats.dropped += 1
                    except queue.Empty:
                        pass
        self.stats.pushed += 1

    def close(self) -> list[EngagementScore]:
        """Stop accepting frames, drain the queue, return all scores."""
        self._queue.put(None)
        self._done.wait()
        return list(self._scores)

    def _run(self):
        while True:
            item = self._queue.get()
            if item is None:
                break
            index, frame = item
            score = self.state.push_frame(frame, frame_index=index)
            if score is not None:
                self._scores.append(score)
        self._done.set()
