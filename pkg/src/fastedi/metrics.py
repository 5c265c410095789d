"""Image quality and throughput accounting."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Protocol

import numpy as np

from .errors import GeometryError

# JSON has no infinity; reports write this for identical images
PSNR_INF_SENTINEL = 999.0


def _pair(a, b):
    a = getattr(a, "data", a)
    b = getattr(b, "data", b)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise GeometryError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; ``inf`` for identical inputs."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def psnr_for_report(value: float) -> float:
    return PSNR_INF_SENTINEL if math.isinf(value) else value


def laplacian_variance(img) -> float:
    """Variance of the 4-neighbour Laplacian over interior pixels."""
    a = np.asarray(getattr(img, "data", img), dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 3 or a.shape[1] < 3:
        raise GeometryError(f"laplacian_variance needs at least 3x3, got {a.shape}")
    lap = (
        a[:-2, 1:-1] + a[2:, 1:-1] + a[1:-1, :-2] + a[1:-1, 2:] - 4.0 * a[1:-1, 1:-1]
    )
    return float(lap.var())


class _FrameTiming(Protocol):
    events_processed: int
    step1_time: float
    step2_time: float


@dataclass
class ThroughputReport:
    events_total: int
    wall_time: float
    ev_per_sec: float
    per_frame_step1_time: list[float] = field(default_factory=list)
    per_frame_step2_time: list[float] = field(default_factory=list)
    peak_queue_depth: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def record_throughput(frames: Iterable[_FrameTiming], peak_queue_depth: int = 0,
                      skip_warmup: bool = False) -> ThroughputReport:
    """Aggregate per-frame timings; wall time is the sum of step 1 and step 2.

    With ``skip_warmup`` the first frame is left out of every total.
    """
    frames = list(frames)
    if skip_warmup:
        frames = frames[1:]
    if not frames:
        raise ValueError("no completed frames to report on")
    s1 = [float(f.step1_time) for f in frames]
    s2 = [float(f.step2_time) for f in frames]
    events = sum(int(f.events_processed) for f in frames)
    wall = sum(s1) + sum(s2)
    rate = events / wall if wall > 0 and events > 0 else 0.0
    return ThroughputReport(events, wall, rate, s1, s2, int(peak_queue_depth))


def speedup(fast: ThroughputReport, slow: ThroughputReport) -> float:
    """Ratio of wall times for the same workload (slow / fast)."""
    if fast.events_total != slow.events_total:
        raise ValueError("speedup compares reports over the same events")
    if fast.wall_time <= 0:
        return math.inf
    return slow.wall_time / fast.wall_time
