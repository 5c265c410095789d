"""Streaming list-based EDI.

Step 1 runs as events arrive: each accepted event updates one pixel's
log sum, exponentiates it, and appends ``(value, marker)`` to that pixel's
list. Step 2 runs once the exposure closes and only walks the lists, so its
cost is O(N_events + N_pixels) instead of O(N_events * N_pixels).

Per-pixel lists live in one shared pool as singly linked chains
(``head``/``tail``/``next`` indices). The pool grows by doubling and is
never shrunk, so steady-state frames allocate nothing during step 1.

One accumulator is one logical stream and must only be driven from one
thread at a time; it may be handed between threads.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .baseline import deblur_with_map
from .errors import ConfigError, GeometryError, OrderingError, StateError, WindowError
from .model import (
    ContrastParams,
    EdiMap,
    Event,
    EventArray,
    EventsLike,
    ExposureWindow,
    GrayImage,
    IntegrationMode,
    SensorGeometry,
    as_event_array,
)

log = logging.getLogger(__name__)

# bytes per pooled entry: float64 value + int64 marker + int64 next link
ENTRY_BYTES = 24
_NO_EVENT = np.iinfo(np.int64).min


@dataclass(frozen=True, slots=True)
class PixelEntry:
    v: float
    marker: int


@dataclass(frozen=True, eq=False)
class DeblurResult:
    latent: GrayImage
    edi_map: EdiMap
    events_processed: int
    step1_time: float
    step2_time: float


@dataclass
class StreamStats:
    events_in: int = 0
    events_dropped_pre_exposure: int = 0
    frames_emitted: int = 0
    peak_list_bytes: int = 0


class EdiAccumulator:
    """Per-pixel list container driving one exposure at a time.

    Parameters
    ----------
    geometry, contrast
        Sensor size and ON/OFF thresholds. The threshold is folded into the
        per-pixel log sum, so asymmetric thresholds cost nothing extra.
    mode
        ``TIME`` weights list entries by elapsed microseconds, ``COUNT`` by
        steps of the global event counter.
    max_entries_per_pixel
        Optional list cap (>= 2). When a list is full the closed segment of
        its tail entry is folded into a per-pixel partial sum and the tail
        is overwritten, which keeps E unchanged up to rounding.
    initial_capacity
        Number of pooled entries to preallocate.
    """

    def __init__(
        self,
        geometry: SensorGeometry,
        contrast: ContrastParams,
        mode: IntegrationMode | str = IntegrationMode.TIME,
        max_entries_per_pixel: int | None = None,
        initial_capacity: int = 4096,
    ):
        if max_entries_per_pixel is not None and max_entries_per_pixel < 2:
            raise ValueError("max_entries_per_pixel must be >= 2 (or None for unlimited)")
        self.geometry = geometry
        self.contrast = contrast
        self.mode = IntegrationMode.parse(mode)
        self.max_entries_per_pixel = max_entries_per_pixel
        n = geometry.n_pixels
        self._s = np.zeros(n)
        self._head = np.full(n, -1, dtype=np.int64)
        self._tail = np.full(n, -1, dtype=np.int64)
        self._length = np.zeros(n, dtype=np.int64)
        self._folded = np.zeros(n)
        self._prev_v = np.zeros(n)
        self._touched = np.zeros(n, dtype=np.int64)
        self._state = np.zeros(K.ST_SIZE, dtype=np.int64)
        cap = max(int(initial_capacity), 1)
        self._pool_v = np.empty(cap)
        self._pool_m = np.empty(cap, dtype=np.int64)
        self._pool_next = np.empty(cap, dtype=np.int64)
        self._window_start: int | None = None
        self._step1_time = 0.0
        self.last_finalize_ops = 0
        self.stats = StreamStats()

    # -- introspection -------------------------------------------------
    @property
    def exposing(self) -> bool:
        return self._window_start is not None

    @property
    def t_start(self) -> int | None:
        return self._window_start

    @property
    def global_counter(self) -> int:
        return int(self._state[K.ST_COUNTER])

    @property
    def capacity(self) -> int:
        return self._pool_v.size

    @property
    def total_entries(self) -> int:
        return int(self._state[K.ST_POOL_USED])

    @property
    def merged_events(self) -> int:
        return int(self._state[K.ST_MERGED])

    @property
    def touched(self) -> frozenset[int]:
        n = int(self._state[K.ST_N_TOUCHED])
        return frozenset(self._touched[:n].tolist())

    def _pixel(self, x: int, y: int) -> int:
        if not (0 <= x < self.geometry.width and 0 <= y < self.geometry.height):
            raise GeometryError(f"pixel ({x}, {y}) outside {self.geometry.width}x{self.geometry.height}")
        return y * self.geometry.width + x

    def log_sum(self, x: int, y: int) -> float:
        return float(self._s[self._pixel(x, y)])

    def list_length(self, x: int, y: int) -> int:
        return int(self._length[self._pixel(x, y)])

    def entries(self, x: int, y: int) -> list[PixelEntry]:
        out = []
        idx = int(self._head[self._pixel(x, y)])
        while idx >= 0:
            out.append(PixelEntry(float(self._pool_v[idx]), int(self._pool_m[idx])))
            idx = int(self._pool_next[idx])
        return out

    # -- lifecycle -----------------------------------------------------
    def begin_exposure(self, t_start: int) -> None:
        if self.exposing:
            raise StateError(f"exposure already open since t={self._window_start}")
        # lazy reset: only pixels touched by the previous exposure are cleared
        K.reset_touched(self._s, self._head, self._tail, self._length, self._folded,
                        self._touched, self._state)
        self._state[K.ST_T_START] = int(t_start)
        self._state[K.ST_LAST_T] = _NO_EVENT
        self._window_start = int(t_start)
        self._step1_time = 0.0

    def _reserve(self, extra: int) -> None:
        need = int(self._state[K.ST_POOL_USED]) + extra
        cap = self._pool_v.size
        if need <= cap:
            return
        while cap < need:
            cap *= 2
        log.debug("growing entry pool %d -> %d", self._pool_v.size, cap)
        for name in ("_pool_v", "_pool_m", "_pool_next"):
            old = getattr(self, name)
            new = np.empty(cap, dtype=old.dtype)
            new[: old.size] = old
            setattr(self, name, new)

    def push_events(self, events: EventsLike) -> int:
        """Step 1 for a batch; returns how many events were accepted.

        Events at or before ``t_start`` are rejected and counted. The batch is
        validated in full before any state changes.
        """
        if not self.exposing:
            raise StateError("push outside an open exposure")
        ev = as_event_array(events)
        n = len(ev)
        if n == 0:
            return 0
        t0 = time.perf_counter()
        g = self.geometry
        code, i = K.validate_batch(ev.t, ev.x, ev.y, ev.p, g.width, g.height, self._state[K.ST_LAST_T])
        if code != K.OK:
            bad = ev[int(i)]
            if code == K.BAD_ORDER:
                raise OrderingError(f"event at t={bad.t} arrives after t={self._last_t_before(ev, int(i))}")
            raise GeometryError(f"event {bad} outside {g.width}x{g.height} sensor")
        self._reserve(n)
        before = self.global_counter
        rejected_before = int(self._state[K.ST_REJECTED])
        K.push_batch(
            ev.t, ev.x, ev.y, ev.p, g.width, self.contrast.c_on, self.contrast.c_off,
            self.mode is IntegrationMode.COUNT, self.max_entries_per_pixel or 0,
            self._s, self._head, self._tail, self._length, self._folded, self._prev_v, self._touched,
            self._pool_v, self._pool_m, self._pool_next, self._state,
        )
        accepted = self.global_counter - before
        self.stats.events_in += n
        self.stats.events_dropped_pre_exposure += int(self._state[K.ST_REJECTED]) - rejected_before
        self.stats.peak_list_bytes = max(self.stats.peak_list_bytes, self.total_entries * ENTRY_BYTES)
        self._step1_time += time.perf_counter() - t0
        return accepted

    def _last_t_before(self, ev: EventArray, i: int) -> int:
        return int(ev.t[i - 1]) if i > 0 else int(self._state[K.ST_LAST_T])

    def push_event(self, e: Event) -> bool:
        """Step 1 for one event; ``False`` when it precedes the window."""
        return self.push_events(EventArray([e.t], [e.x], [e.y], [e.p])) == 1

    def end_exposure(self, t_end: int, b: GrayImage) -> DeblurResult:
        """Step 2: close the window at ``t_end`` and deblur ``b``."""
        if not self.exposing:
            raise StateError("no open exposure to end")
        t_start = self._window_start
        if t_end <= t_start:
            raise WindowError(f"t_end={t_end} must be after t_start={t_start}")
        last_t = int(self._state[K.ST_LAST_T])
        if last_t != _NO_EVENT and t_end < last_t:
            raise WindowError(f"t_end={t_end} precedes the last pushed event at t={last_t}")
        if (b.width, b.height) != (self.geometry.width, self.geometry.height):
            raise GeometryError(
                f"frame is {b.width}x{b.height}, sensor is {self.geometry.width}x{self.geometry.height}"
            )
        t0 = time.perf_counter()
        n_events = self.global_counter
        e = np.ones(self.geometry.n_pixels)
        if self.mode is IntegrationMode.TIME:
            base, end, denom = t_start, t_end, float(t_end - t_start)
        else:
            base, end, denom = 1, n_events + 1, float(n_events)
        self.last_finalize_ops = 0
        if n_events:
            self.last_finalize_ops = K.finalize(
                base, end, denom, self._head, self._folded, self._pool_v, self._pool_m,
                self._pool_next, self._touched, int(self._state[K.ST_N_TOUCHED]), e,
            )
        edi = EdiMap(self.geometry.width, self.geometry.height, e)
        latent = deblur_with_map(b, edi)
        K.reset_touched(self._s, self._head, self._tail, self._length, self._folded,
                        self._touched, self._state)
        self._window_start = None
        step2 = time.perf_counter() - t0
        self.stats.frames_emitted += 1
        return DeblurResult(latent, edi, n_events, self._step1_time, step2)

    def abort_exposure(self) -> None:
        """Discard the open exposure without computing a result."""
        K.reset_touched(self._s, self._head, self._tail, self._length, self._folded,
                        self._touched, self._state)
        self._window_start = None


def check_frames(frames: Sequence[tuple[GrayImage, ExposureWindow]]) -> None:
    """Reject unsorted or overlapping exposure windows."""
    prev = None
    for i, (_, w) in enumerate(frames):
        if prev is not None:
            if w.t_start < prev.t_start:
                raise ConfigError(f"frame {i} starts before frame {i - 1}")
            if w.t_start < prev.t_end:
                raise ConfigError(f"frame {i} window overlaps frame {i - 1}")
        prev = w


def run_offline(
    events: EventsLike,
    frames: Sequence[tuple[GrayImage, ExposureWindow]],
    cp: ContrastParams,
    geom: SensorGeometry,
    mode: IntegrationMode | str = IntegrationMode.TIME,
    accumulator: EdiAccumulator | None = None,
) -> list[DeblurResult]:
    """Route a recorded stream through begin/push/end, one result per frame.

    Events outside every exposure window are dropped and counted in
    ``accumulator.stats.events_dropped_pre_exposure``.
    """
    ev = as_event_array(events)
    ev.check_sorted()
    ev.check_geometry(geom)
    check_frames(frames)
    acc = accumulator or EdiAccumulator(geom, cp, mode)
    results = []
    cursor = 0
    for b, window in frames:
        lo, hi = np.searchsorted(ev.t, [window.t_start, window.t_end], side="right")
        skipped = max(int(lo) - cursor, 0)
        acc.stats.events_in += skipped
        acc.stats.events_dropped_pre_exposure += skipped
        acc.begin_exposure(window.t_start)
        acc.push_events(ev[lo:hi])
        results.append(acc.end_exposure(window.t_end, b))
        cursor = int(hi)
    tail = len(ev) - cursor
    acc.stats.events_in += tail
    acc.stats.events_dropped_pre_exposure += tail
    return results


def throughput_probe(acc: EdiAccumulator, events: EventsLike) -> float:
    """Events per second for pushing ``events`` on the calling thread."""
    if not acc.exposing:
        raise StateError("throughput probe needs an open exposure")
    ev = as_event_array(events)
    if len(ev) == 0:
        return 0.0
    acc._reserve(len(ev))
    t0 = time.perf_counter()
    acc.push_events(ev)
    elapsed = time.perf_counter() - t0
    return len(ev) / elapsed
