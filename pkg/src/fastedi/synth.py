"""Deterministic synthetic scenes, events and blurry frames.

Scenes are analytic patterns translated horizontally at constant velocity
and point-sampled at integer pixel positions. Events come from an ideal,
noise-free sensor: the log intensity is linearly interpolated between video
samples and an event fires at every crossing of the per-pixel reference
level. Blurry frames are the trapezoidal time average of the latent video.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import GeometryError, WindowError
from .model import ContrastParams, EventArray, ExposureWindow, GrayImage, SensorGeometry

PATTERNS = ("vertical_edge", "sine_grating", "checkerboard")

# slack on threshold comparisons, absorbs rounding in sums of log thresholds
CROSSING_TOL = 1e-9
MAX_SAMPLES = 1_000_000


@dataclass(frozen=True)
class SceneSpec:
    """Moving test pattern.

    ``offset`` is the pattern position at t=0 in pixels: the first bright
    column of ``vertical_edge`` or the phase shift of the periodic patterns.
    ``None`` puts the edge at one eighth of the width. ``wavelength`` is the
    grating period and twice the checker cell size.
    """

    pattern: str = "vertical_edge"
    velocity: float = 200.0
    geometry: SensorGeometry = field(default_factory=lambda: SensorGeometry(128, 96))
    duration: int = 500_000
    intensity_floor: float = 1e-3
    seed: int = 0
    offset: float | None = None
    wavelength: float = 16.0
    low: float = 0.2
    high: float = 0.8

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}; choose from {', '.join(PATTERNS)}")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if not (0 < self.intensity_floor <= 0.1):
            raise ValueError("intensity_floor must lie in (0, 0.1]")
        if not math.isfinite(self.velocity):
            raise ValueError("velocity must be finite")
        if not (0 <= self.low <= 1 and 0 <= self.high <= 1):
            raise ValueError("pattern intensities must lie in [0, 1]")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")


@dataclass(frozen=True, eq=False)
class LatentVideo:
    """Sampled latent frames, stored as one (n, H, W) array."""

    frames: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if f.ndim != 3:
            raise GeometryError("frames must be (n, height, width)")
        if f.shape[0] != ts.size:
            raise ValueError("one timestamp per frame required")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("video timestamps must be strictly increasing")
        object.__setattr__(self, "frames", f)
        object.__setattr__(self, "timestamps", ts)

    @classmethod
    def from_images(cls, images, timestamps) -> "LatentVideo":
        shapes = {(im.height, im.width) for im in images}
        if len(shapes) > 1:
            raise GeometryError(f"frames have mixed geometry {sorted(shapes)}")
        return cls(np.stack([im.data for im in images]), timestamps)

    @property
    def geometry(self) -> SensorGeometry:
        return SensorGeometry(self.frames.shape[2], self.frames.shape[1])

    def __len__(self):
        return self.frames.shape[0]

    def image(self, i: int) -> GrayImage:
        return GrayImage(self.frames[i])


def render_at(spec: SceneSpec, timestamps) -> np.ndarray:
    """Analytic pattern at arbitrary microsecond timestamps, shape (n, H, W)."""
    ts = np.asarray(timestamps, dtype=np.float64).reshape(-1, 1, 1)
    g = spec.geometry
    xs = np.arange(g.width, dtype=np.float64).reshape(1, 1, -1)
    ys = np.arange(g.height, dtype=np.float64).reshape(1, -1, 1)
    shift = spec.velocity * ts / 1e6
    offset = g.width / 8 if spec.offset is None else spec.offset
    if spec.pattern == "vertical_edge":
        img = np.where(xs >= offset + shift, spec.high, spec.low)
        img = np.broadcast_to(img, (ts.shape[0], g.height, g.width))
    elif spec.pattern == "sine_grating":
        mid = 0.5 * (spec.low + spec.high)
        amp = 0.5 * (spec.high - spec.low)
        img = mid + amp * np.sin(2 * np.pi * (xs - shift - offset) / spec.wavelength)
        img = np.broadcast_to(img, (ts.shape[0], g.height, g.width))
    else:
        cell = spec.wavelength / 2
        parity = (np.floor((xs - shift - offset) / cell) + np.floor(ys / cell)) % 2
        img = np.where(parity == 0, spec.high, spec.low)
    return np.maximum(np.array(img, dtype=np.float64), spec.intensity_floor)


def sample_times(duration: int, sample_period: int) -> np.ndarray:
    if sample_period < 1:
        raise ValueError("sample_period must be >= 1 microsecond")
    ts = np.arange(0, duration + 1, sample_period, dtype=np.int64)
    if ts[-1] != duration:
        ts = np.append(ts, duration)
    if ts.size > MAX_SAMPLES:
        raise ValueError(f"{ts.size} samples exceed the limit of {MAX_SAMPLES}")
    return ts


def render_scene(spec: SceneSpec, sample_period: int = 100) -> LatentVideo:
    ts = sample_times(spec.duration, sample_period)
    return LatentVideo(render_at(spec, ts), ts)


class EventSynthesizer:
    """Incremental ideal-sensor event generator.

    Feed consecutive video chunks with :meth:`feed`; the per-pixel reference
    levels carry over between calls. Output of each call is sorted by
    ``(t, y, x)``, with simultaneous same-pixel events in emission order.
    """

    def __init__(self, geometry: SensorGeometry, cp: ContrastParams, floor: float = 1e-3,
                 tol: float = CROSSING_TOL):
        self.geometry = geometry
        self.cp = cp
        self.floor = floor
        self.tol = tol
        self._r_ref = None
        self._r_last = None
        self._t_last = None
        self._buf = 1 << 16
        self._pix = np.empty(self._buf, dtype=np.int64)
        self._t = np.empty(self._buf, dtype=np.int64)
        self._p = np.empty(self._buf, dtype=np.int8)

    def _grow(self, need):
        while self._buf < need:
            self._buf *= 2
        for name in ("_pix", "_t", "_p"):
            old = getattr(self, name)
            new = np.empty(self._buf, dtype=old.dtype)
            new[: old.size] = old
            setattr(self, name, new)

    def feed(self, frames: np.ndarray, timestamps) -> EventArray:
        frames = np.asarray(frames, dtype=np.float64)
        g = self.geometry
        if frames.shape[1:] != g.shape:
            raise GeometryError(f"frame shape {frames.shape[1:]} does not match sensor {g.shape}")
        ts = np.asarray(timestamps, dtype=np.int64)
        cmin = min(self.cp.c_on, -self.cp.c_off)
        cmax = max(self.cp.c_on, -self.cp.c_off)
        n = 0
        for k in range(frames.shape[0]):
            r = np.log(np.maximum(frames[k].reshape(-1), self.floor))
            if self._r_ref is None:
                self._r_ref = r.copy()
            else:
                # each pixel fires at most |delta|/cmin + 1 events per interval
                bound = int(np.sum(np.floor((np.abs(r - self._r_last) + cmax) / cmin) + 1))
                if n + bound > self._buf:
                    self._grow(n + bound)
                n = _kernels.log_crossings(
                    self._r_last, r, int(self._t_last), int(ts[k]), self._r_ref,
                    self.cp.c_on, self.cp.c_off, self.tol, self._pix, self._t, self._p, n,
                )
                if n < 0:
                    raise RuntimeError("event buffer bound violated")
            self._r_last = r
            self._t_last = ts[k]
        pix = self._pix[:n]
        t = self._t[:n]
        order = np.lexsort((pix, t))
        pix = pix[order]
        return EventArray(t[order], pix % g.width, pix // g.width, self._p[:n][order])


def _merge_sorted(chunks: list[EventArray], width: int) -> EventArray:
    if not chunks:
        return EventArray.empty()
    t = np.concatenate([c.t for c in chunks])
    x = np.concatenate([c.x for c in chunks])
    y = np.concatenate([c.y for c in chunks])
    p = np.concatenate([c.p for c in chunks])
    order = np.lexsort((y.astype(np.int64) * width + x, t))
    return EventArray(t[order], x[order], y[order], p[order])


def events_from_video(video: LatentVideo, cp: ContrastParams, floor: float = 1e-3) -> EventArray:
    """Ideal-sensor events for a sampled latent video, sorted by (t, y, x)."""
    if len(video) < 2:
        raise ValueError("need at least two video samples")
    synth = EventSynthesizer(video.geometry, cp, floor)
    return synth.feed(video.frames, video.timestamps)


def blur_from_video(video: LatentVideo, window: ExposureWindow) -> GrayImage:
    """Trapezoidal time average over the window; endpoints linearly interpolated."""
    ts = video.timestamps
    if ts[0] > window.t_start or ts[-1] < window.t_end:
        raise WindowError(
            f"video covers [{int(ts[0])}, {int(ts[-1])}], window is [{window.t_start}, {window.t_end}]"
        )

    def at(t):
        j = int(np.searchsorted(ts, t, side="left"))
        if ts[j] == t:
            return video.frames[j]
        w = (t - ts[j - 1]) / (ts[j] - ts[j - 1])
        return (1 - w) * video.frames[j - 1] + w * video.frames[j]

    inside = np.flatnonzero((ts > window.t_start) & (ts < window.t_end))
    times = np.concatenate([[window.t_start], ts[inside], [window.t_end]]).astype(np.float64)
    samples = [at(window.t_start)] + [video.frames[j] for j in inside] + [at(window.t_end)]
    total = np.zeros_like(samples[0])
    for j in range(len(samples) - 1):
        total += 0.5 * (samples[j] + samples[j + 1]) * (times[j + 1] - times[j])
    return GrayImage(np.clip(total / window.duration, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    geometry: SensorGeometry
    contrast: ContrastParams
    events: EventArray
    frames: list  # list[tuple[GrayImage, ExposureWindow]]
    ground_truth: list  # list[GrayImage], latent at each t_start


def make_dataset(
    spec: SceneSpec,
    cp: ContrastParams,
    frame_rate: float = 20.0,
    exposure_fraction: float = 0.5,
    sample_period: int = 100,
    chunk_samples: int = 256,
) -> SyntheticDataset:
    """Events, blurry frames and ground-truth latents for one scene."""
    if not (0 < exposure_fraction <= 1):
        raise ValueError("exposure_fraction must lie in (0, 1]")
    if frame_rate < 1:
        raise ValueError("frame_rate must be >= 1 fps")
    g = spec.geometry
    ts = sample_times(spec.duration, sample_period)

    synth = EventSynthesizer(g, cp, spec.intensity_floor)
    chunks = []
    for lo in range(0, ts.size, chunk_samples):
        part = ts[lo: lo + chunk_samples]
        ev = synth.feed(render_at(spec, part), part)
        if len(ev):
            chunks.append(ev)
    events = _merge_sorted(chunks, g.width)

    interval = 1e6 / frame_rate
    exposure = int(round(exposure_fraction * interval))
    if exposure < 1:
        raise ValueError("exposure shorter than one microsecond")
    frames, truth = [], []
    i = 0
    while True:
        t0 = int(round(i * interval))
        t1 = t0 + exposure
        if t1 > spec.duration:
            break
        i0 = int(np.searchsorted(ts, t0, side="right")) - 1
        i1 = int(np.searchsorted(ts, t1, side="left"))
        grid = ts[i0: i1 + 1]
        window = ExposureWindow(t0, t1)
        frames.append((blur_from_video(LatentVideo(render_at(spec, grid), grid), window), window))
        truth.append(GrayImage(render_at(spec, [t0])[0]))
        i += 1
    return SyntheticDataset(g, cp, events, frames, truth)


def standard_spec(**overrides) -> SceneSpec:
    """Edge moving 200 px/s; at 20 fps and 50 % exposure it smears over 5 px."""
    return SceneSpec(**overrides)


def random_events(geometry: SensorGeometry, n: int, t_start: int, t_end: int,
                  seed: int = 0) -> EventArray:
    """Uniformly random sorted events in ``(t_start, t_end]``, for load tests."""
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(t_start + 1, t_end + 1, size=n, dtype=np.int64))
    x = rng.integers(0, geometry.width, size=n)
    y = rng.integers(0, geometry.height, size=n)
    p = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
    return EventArray(t, x, y, p)
