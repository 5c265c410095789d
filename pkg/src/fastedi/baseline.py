"""Reference EDI with an array-like container.

Every event triggers a full-frame addition of the current latent image into
the accumulator, so cost is O(N_events * N_pixels). It is kept deliberately
simple: it serves as the oracle for :mod:`fastedi.fast` and as the slow side
of the speedup benchmark.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import GeometryError, RangeError, WindowError
from .model import (
    ContrastParams,
    EdiMap,
    EventArray,
    EventsLike,
    ExposureWindow,
    GrayImage,
    IntegrationMode,
    SensorGeometry,
    as_event_array,
)

EPS_E = 1e-12


@dataclass(frozen=True, eq=False)
class LatentState:
    """Accumulated state after a frame-wise pass over one exposure."""

    geometry: SensorGeometry
    s: np.ndarray
    acc: np.ndarray
    weight_total: float


def _check_in_window(ev: EventArray, window: ExposureWindow) -> None:
    if len(ev) == 0:
        return
    ev.check_sorted()
    if ev.t[0] <= window.t_start or ev.t[-1] > window.t_end:
        raise WindowError(
            f"events span [{int(ev.t[0])}, {int(ev.t[-1])}] but the window is "
            f"({window.t_start}, {window.t_end}]"
        )


def accumulate_baseline(
    events: EventsLike,
    window: ExposureWindow,
    cp: ContrastParams,
    geom: SensorGeometry,
    mode: IntegrationMode | str = IntegrationMode.TIME,
) -> LatentState:
    mode = IntegrationMode.parse(mode)
    ev = as_event_array(events)
    _check_in_window(ev, window)
    ev.check_geometry(geom)
    s, acc, weight = _kernels.baseline_accumulate(
        ev.t, ev.x, ev.y, ev.p, geom.width, geom.n_pixels,
        cp.c_on, cp.c_off, window.t_start, window.t_end, mode is IntegrationMode.COUNT,
    )
    return LatentState(geom, s.reshape(geom.shape), acc.reshape(geom.shape), weight)


def compute_edi_baseline(
    events: EventsLike,
    window: ExposureWindow,
    cp: ContrastParams,
    geom: SensorGeometry,
    mode: IntegrationMode | str = IntegrationMode.TIME,
) -> EdiMap:
    """E(f, T) with f fixed at ``window.t_start``.

    ``events`` must be sorted and lie in ``(t_start, t_end]``. In count mode
    an empty stream gives E == 1.
    """
    state = accumulate_baseline(events, window, cp, geom, mode)
    if state.weight_total == 0:
        return EdiMap.ones(geom)
    return EdiMap(geom.width, geom.height, state.acc / state.weight_total)


def deblur_with_map(b: GrayImage, e: EdiMap) -> GrayImage:
    """Latent image at the reference time: ``clamp(B / E, 0, 1)``."""
    if (b.width, b.height) != (e.width, e.height):
        raise GeometryError(f"image is {b.width}x{b.height} but EDI map is {e.width}x{e.height}")
    return GrayImage(np.clip(b.data / np.maximum(e.e, EPS_E), 0.0, 1.0))


def _log_ratios(ev: EventArray, cp: ContrastParams, geom: SensorGeometry, t_ref: int, targets):
    """Yield the per-pixel cumulative log change over (t_ref, tau] for each target."""
    s = np.zeros(geom.n_pixels)
    lo = int(np.searchsorted(ev.t, t_ref, side="right"))
    contrib = np.where(ev.p > 0, cp.c_on, cp.c_off)
    pix = ev.y.astype(np.int64) * geom.width + ev.x
    prev = None
    for tau in targets:
        if tau < t_ref:
            raise RangeError(f"target {tau} precedes reference time {t_ref}")
        if prev is not None and tau < prev:
            raise RangeError("targets must be sorted")
        hi = int(np.searchsorted(ev.t, tau, side="right"))
        if hi > lo:
            # unbuffered add keeps stream order for repeated pixels
            np.add.at(s, pix[lo:hi], contrib[lo:hi])
            lo = hi
        prev = tau
        yield s.reshape(geom.shape)


def reconstruct_latent_raw(
    l0: np.ndarray,
    events: EventsLike,
    cp: ContrastParams,
    t_ref: int,
    targets: Sequence[int],
) -> list[np.ndarray]:
    """Unclamped latents ``l0 * exp(cumulative_sum)`` at each target."""
    l0 = np.asarray(l0, dtype=np.float64)
    geom = SensorGeometry(l0.shape[1], l0.shape[0])
    ev = as_event_array(events)
    ev.check_sorted()
    ev.check_geometry(geom)
    return [l0 * np.exp(s) for s in _log_ratios(ev, cp, geom, t_ref, targets)]


def reconstruct_latent(
    l0: GrayImage,
    events: EventsLike,
    cp: ContrastParams,
    t_ref: int,
    targets: Sequence[int],
) -> list[GrayImage]:
    """Latent frames at ``targets`` propagated forward from ``l0`` at ``t_ref``.

    Propagation happens in unclamped space; clamping to [0, 1] is applied
    only to the returned images.
    """
    raw = reconstruct_latent_raw(l0.data, events, cp, t_ref, targets)
    return [GrayImage(np.clip(r, 0.0, 1.0)) for r in raw]


@dataclass(frozen=True, eq=False)
class BaselineResult:
    latent: GrayImage
    edi_map: EdiMap
    events_processed: int
    step1_time: float
    step2_time: float


def run_offline_baseline(
    events: EventsLike,
    frames: Sequence[tuple[GrayImage, ExposureWindow]],
    cp: ContrastParams,
    geom: SensorGeometry,
    mode: IntegrationMode | str = IntegrationMode.TIME,
) -> list[BaselineResult]:
    """Batch driver mirroring :func:`fastedi.fast.run_offline` for the reference engine.

    All work happens after each exposure closes, so the whole cost lands in
    ``step2_time``.
    """
    from .fast import check_frames

    ev = as_event_array(events)
    ev.check_sorted()
    check_frames(frames)
    out = []
    for b, window in frames:
        sub = ev.in_window(window)
        t0 = time.perf_counter()
        e = compute_edi_baseline(sub, window, cp, geom, mode)
        latent = deblur_with_map(b, e)
        out.append(BaselineResult(latent, e, len(sub), 0.0, time.perf_counter() - t0))
    return out
