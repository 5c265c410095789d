"""Wall-clock paced replay of a recorded stream through a bounded queue.

A producer thread releases event chunks and frame boundaries at their
sensor timestamps (scaled by ``rate_multiplier``). A sensor cannot wait, so
when the queue is full the item is discarded and the frame it belongs to
is marked dropped. One consumer thread owns the engine. This is the only
place in the package where pacing or threads exist.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .baseline import compute_edi_baseline, deblur_with_map
from .fast import EdiAccumulator, check_frames
from .model import (
    ContrastParams,
    EventArray,
    ExposureWindow,
    GrayImage,
    IntegrationMode,
    SensorGeometry,
)

log = logging.getLogger(__name__)

_STOP = ("stop",)


@dataclass
class ReplayReport:
    engine: str
    rate_multiplier: float
    queue_cap: int
    events_total: int
    source_ev_per_sec: float
    frames_total: int
    frames_completed: int
    dropped_frames: list[int]
    items_dropped: int
    peak_queue_depth: int
    wall_time: float
    latency: dict = field(default_factory=dict)
    jammed: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _schedule(events: EventArray, windows: Sequence[ExposureWindow], chunk_us: int):
    """Sensor-time ordered messages: (release_t, kind, payload, frame index or -1)."""
    if len(events):
        t_lo = min(int(events.t[0]), windows[0].t_start if windows else int(events.t[0]))
        t_hi = max(int(events.t[-1]), windows[-1].t_end if windows else int(events.t[-1]))
    elif windows:
        t_lo, t_hi = windows[0].t_start, windows[-1].t_end
    else:
        return []
    bounds = set(range(t_lo, t_hi + chunk_us, chunk_us))
    for w in windows:
        bounds.update((w.t_start, w.t_end))
    bounds = np.array(sorted(bounds), dtype=np.int64)
    starts = {w.t_start: i for i, w in enumerate(windows)}
    ends = {w.t_end: i for i, w in enumerate(windows)}
    w_starts = np.array([w.t_start for w in windows], dtype=np.int64)

    def owner(t):
        i = int(np.searchsorted(w_starts, t, side="left")) - 1
        return i if i >= 0 and windows[i].contains(t) else -1

    msgs = []
    cut = np.searchsorted(events.t, bounds, side="right")
    prev_cut = int(np.searchsorted(events.t, bounds[0], side="right"))
    if prev_cut:
        msgs.append((int(bounds[0]), "events", events[:prev_cut], -1))
    for b, c in zip(bounds.tolist(), cut.tolist()):
        if c > prev_cut:
            msgs.append((b, "events", events[prev_cut:c], owner(b)))
        prev_cut = c
        # an end and a start may share a timestamp; close before opening
        if b in ends:
            msgs.append((b, "end", ends[b], ends[b]))
        if b in starts:
            msgs.append((b, "begin", starts[b], starts[b]))
    return msgs


def replay(
    events: EventArray,
    frames: Sequence[tuple[GrayImage, ExposureWindow]],
    cp: ContrastParams,
    geom: SensorGeometry,
    mode: IntegrationMode | str = IntegrationMode.TIME,
    engine: str = "fast",
    rate_multiplier: float = 1.0,
    queue_cap: int = 64,
    chunk_us: int = 1000,
) -> ReplayReport:
    if engine not in ("fast", "baseline"):
        raise ValueError(f"unknown engine {engine!r}")
    if rate_multiplier <= 0:
        raise ValueError("rate_multiplier must be positive")
    if queue_cap < 1 or chunk_us < 1:
        raise ValueError("queue_cap and chunk_us must be >= 1")
    mode = IntegrationMode.parse(mode)
    check_frames(frames)
    events.check_sorted()
    windows = [w for _, w in frames]
    msgs = _schedule(events, windows, chunk_us)

    q: queue.Queue = queue.Queue(maxsize=queue_cap)
    dropped = set()
    released = {}
    latency = [None] * len(frames)
    counters = {"items_dropped": 0, "peak": 0}
    t0_sensor = msgs[0][0] if msgs else 0

    def produce():
        origin = time.perf_counter()
        for t, kind, payload, frame in msgs:
            due = origin + (t - t0_sensor) / 1e6 / rate_multiplier
            delay = due - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            if kind == "end":
                released[frame] = time.perf_counter()
            try:
                q.put_nowait((kind, payload, frame))
            except queue.Full:
                counters["items_dropped"] += 1
                if frame >= 0:
                    dropped.add(frame)
                continue
            counters["peak"] = max(counters["peak"], q.qsize())
        q.put(_STOP)

    acc = EdiAccumulator(geom, cp, mode) if engine == "fast" else None
    buffered: list[EventArray] = []
    state = {"open": None, "completed": 0}

    def consume():
        while True:
            item = q.get()
            if item is _STOP:
                return
            kind, payload, frame = item
            if kind == "begin":
                if engine == "fast":
                    if acc.exposing:
                        acc.abort_exposure()
                    acc.begin_exposure(windows[payload].t_start)
                buffered.clear()
                state["open"] = payload
            elif kind == "events":
                if state["open"] is None:
                    continue
                if engine == "fast":
                    acc.push_events(payload)
                else:
                    buffered.append(payload)
            elif kind == "end":
                if state["open"] != payload:
                    continue
                b, w = frames[payload]
                if engine == "fast":
                    acc.end_exposure(w.t_end, b)
                else:
                    sub = _concat(buffered).in_window(w)
                    deblur_with_map(b, compute_edi_baseline(sub, w, cp, geom, mode))
                    buffered.clear()
                state["open"] = None
                state["completed"] += 1
                latency[payload] = time.perf_counter() - released[payload]

    consumer = threading.Thread(target=consume, name="edi-consumer", daemon=True)
    producer = threading.Thread(target=produce, name="edi-producer", daemon=True)
    start = time.perf_counter()
    consumer.start()
    producer.start()
    producer.join()
    consumer.join()
    wall = time.perf_counter() - start

    for i in range(len(frames)):
        if latency[i] is None:
            dropped.add(i)
    lat = [latency[i] if i not in dropped else None for i in range(len(frames))]
    ok = [v for v in lat if v is not None]
    span = (int(events.t[-1]) - int(events.t[0])) / 1e6 if len(events) > 1 else 0.0
    report = ReplayReport(
        engine=engine,
        rate_multiplier=float(rate_multiplier),
        queue_cap=int(queue_cap),
        events_total=len(events),
        source_ev_per_sec=len(events) / span if span > 0 else 0.0,
        frames_total=len(frames),
        frames_completed=state["completed"],
        dropped_frames=sorted(dropped),
        items_dropped=counters["items_dropped"],
        peak_queue_depth=counters["peak"],
        wall_time=wall,
        latency={
            "per_frame": lat,
            "mean": float(np.mean(ok)) if ok else None,
            "max": float(np.max(ok)) if ok else None,
        },
        jammed=bool(dropped),
    )
    log.info("replay %s: %d/%d frames, peak depth %d", engine, report.frames_completed,
             report.frames_total, report.peak_queue_depth)
    return report


def _concat(parts: list[EventArray]) -> EventArray:
    if not parts:
        return EventArray.empty()
    if len(parts) == 1:
        return parts[0]
    return EventArray(*(np.concatenate([getattr(p, n) for p in parts]) for n in "txyp"))
