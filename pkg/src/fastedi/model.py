"""Domain types and the event formation model.

Timestamps are integer microseconds. Intensities are float64 in [0, 1];
8-bit values only appear at file boundaries. Time intervals follow one
convention everywhere: ``(from, to]``, an event exactly at ``from`` is
excluded and one exactly at ``to`` is included, so abutting intervals tile.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import DomainError, GeometryError, OrderingError, WindowError

T_DTYPE = np.int64
XY_DTYPE = np.int32
P_DTYPE = np.int8


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, slots=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise GeometryError(f"geometry must be at least 1x1, got {self.width}x{self.height}")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def shape(self) -> tuple[int, int]:
        """numpy (rows, cols) shape."""
        return (self.height, self.width)


@dataclass(frozen=True, slots=True)
class Event:
    t: int
    x: int
    y: int
    p: int

    def __post_init__(self):
        if self.p not in (1, -1):
            raise ValueError(f"polarity must be +1 or -1, got {self.p!r}")
        if self.x < 0 or self.y < 0:
            raise GeometryError(f"negative coordinate ({self.x}, {self.y})")


@dataclass(frozen=True, slots=True)
class ContrastParams:
    """Signed log-intensity thresholds; ``c_off`` is stored negative."""

    c_on: float
    c_off: float

    def __post_init__(self):
        if not (math.isfinite(self.c_on) and self.c_on > 0):
            raise DomainError(f"c_on must be finite and > 0, got {self.c_on}")
        if not (math.isfinite(self.c_off) and self.c_off < 0):
            raise DomainError(f"c_off must be finite and < 0, got {self.c_off}")


@dataclass(frozen=True, slots=True)
class ExposureWindow:
    t_start: int
    t_end: int

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise WindowError(f"empty exposure window [{self.t_start}, {self.t_end}]")

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start

    def contains(self, t: int) -> bool:
        return self.t_start < t <= self.t_end


class IntegrationMode(enum.Enum):
    """Weighting of the outer integral: elapsed microseconds or event-counter steps."""

    TIME = "time"
    COUNT = "count"

    @classmethod
    def parse(cls, value: Union[str, "IntegrationMode"]) -> "IntegrationMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown integration mode {value!r}; expected 'time' or 'count'") from None


class GrayImage:
    """Immutable normalized grayscale image backed by a read-only (H, W) float64 array."""

    __slots__ = ("_data",)

    def __init__(self, data, width: int | None = None, height: int | None = None):
        a = np.array(data, dtype=np.float64, copy=True)
        if a.ndim == 1:
            if width is None or height is None:
                raise GeometryError("flat pixel data needs width and height")
            if a.size != width * height:
                raise GeometryError(f"expected {width * height} values, got {a.size}")
            a = a.reshape(height, width)
        elif a.ndim != 2:
            raise GeometryError(f"image data must be 1-D or 2-D, got {a.ndim}-D")
        if (width is not None and a.shape[1] != width) or (height is not None and a.shape[0] != height):
            raise GeometryError(f"data shape {a.shape} does not match {width}x{height}")
        if a.size == 0:
            raise GeometryError("empty image")
        if not np.all(np.isfinite(a)):
            raise ValueError("image contains non-finite values")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError(f"intensities must lie in [0, 1], got [{a.min()}, {a.max()}]")
        self._data = _frozen(a)

    @classmethod
    def filled(cls, geometry: SensorGeometry, value: float) -> "GrayImage":
        return cls(np.full(geometry.shape, value))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def geometry(self) -> SensorGeometry:
        return SensorGeometry(self.width, self.height)

    def quantize(self) -> np.ndarray:
        """8-bit codes, round-half-up of ``255 * x``."""
        return np.floor(self._data * 255.0 + 0.5).astype(np.uint8)

    @classmethod
    def from_uint8(cls, codes) -> "GrayImage":
        return cls(np.asarray(codes, dtype=np.float64) / 255.0)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self._data.shape == other._data.shape and bool(np.array_equal(self._data, other._data))

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class EdiMap:
    """Per-pixel E(f, T) values dividing the blurry frame."""

    width: int
    height: int
    e: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.e, dtype=np.float64)
        if e.size != self.width * self.height:
            raise GeometryError(f"EdiMap expects {self.width * self.height} values, got {e.size}")
        e = e.reshape(self.height, self.width)
        if not np.all(np.isfinite(e)) or np.any(e <= 0.0):
            raise ValueError("EdiMap values must be finite and strictly positive")
        if e.flags.writeable:
            e = e.copy()
        object.__setattr__(self, "e", _frozen(e))

    @classmethod
    def ones(cls, geometry: SensorGeometry) -> "EdiMap":
        return cls(geometry.width, geometry.height, np.ones(geometry.shape))


@dataclass(frozen=True, eq=False)
class EventArray:
    """Columnar, read-only event sequence (the bulk counterpart of ``Event``)."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        cols = {}
        for name, dtype in (("t", T_DTYPE), ("x", XY_DTYPE), ("y", XY_DTYPE), ("p", P_DTYPE)):
            a = np.asarray(getattr(self, name))
            # read-only views of our own columns are shared, anything else is copied
            if a.dtype != dtype or a.flags.writeable or not a.flags.c_contiguous:
                a = np.array(a, dtype=dtype, copy=True)
            cols[name] = a.reshape(-1)
        n = cols["t"].size
        if any(a.size != n for a in cols.values()):
            raise ValueError("event columns differ in length")
        if n and not np.all((cols["p"] == 1) | (cols["p"] == -1)):
            raise ValueError("polarity must be +1 or -1")
        for name, a in cols.items():
            object.__setattr__(self, name, _frozen(a))

    @classmethod
    def empty(cls) -> "EventArray":
        z = np.zeros(0)
        return cls(z, z, z, z)

    @classmethod
    def from_events(cls, events: Iterable[Event]) -> "EventArray":
        events = list(events)
        if not events:
            return cls.empty()
        return cls(
            [e.t for e in events],
            [e.x for e in events],
            [e.y for e in events],
            [e.p for e in events],
        )

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            return Event(int(self.t[key]), int(self.x[key]), int(self.y[key]), int(self.p[key]))
        return EventArray(self.t[key], self.x[key], self.y[key], self.p[key])

    def __iter__(self) -> Iterator[Event]:
        for t, x, y, p in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield Event(t, x, y, p)

    def __eq__(self, other):
        if not isinstance(other, EventArray):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in "txyp")

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.t) >= 0))

    def check_sorted(self) -> None:
        if len(self) > 1:
            bad = np.flatnonzero(np.diff(self.t) < 0)
            if bad.size:
                i = int(bad[0]) + 1
                raise OrderingError(
                    f"event {i} at t={int(self.t[i])} precedes event {i - 1} at t={int(self.t[i - 1])}"
                )

    def check_geometry(self, geometry: SensorGeometry) -> None:
        if len(self) == 0:
            return
        if (
            self.x.min() < 0
            or self.y.min() < 0
            or self.x.max() >= geometry.width
            or self.y.max() >= geometry.height
        ):
            raise GeometryError(f"event coordinates exceed {geometry.width}x{geometry.height} sensor")

    def in_window(self, window: ExposureWindow) -> "EventArray":
        """Slice of a sorted array with ``t_start < t <= t_end``."""
        lo, hi = np.searchsorted(self.t, [window.t_start, window.t_end], side="right")
        return self[lo:hi]


EventsLike = Union[EventArray, Sequence[Event]]


def as_event_array(events: EventsLike) -> EventArray:
    if isinstance(events, EventArray):
        return events
    return EventArray.from_events(events)


def signed_contrast(p: int, cp: ContrastParams) -> float:
    """Threshold applied by one event of polarity ``p``."""
    if p == 1:
        return cp.c_on
    if p == -1:
        return cp.c_off
    raise ValueError(f"polarity must be +1 or -1, got {p!r}")


def cumulative_sum(events: EventsLike, cp: ContrastParams, t_from: int, t_to: int) -> float:
    """Signed log-intensity change over ``(t_from, t_to]`` for one pixel's events.

    Events are summed in stream order so results are reproducible bit for bit.
    """
    if t_from > t_to:
        raise WindowError(f"t_from={t_from} is after t_to={t_to}")
    ev = as_event_array(events)
    ev.check_sorted()
    total = 0.0
    for t, p in zip(ev.t.tolist(), ev.p.tolist()):
        if t_from < t <= t_to:
            total += cp.c_on if p == 1 else cp.c_off
    return total
