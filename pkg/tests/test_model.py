import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastedi.errors import DomainError, GeometryError, OrderingError, WindowError
from fastedi.model import (
    ContrastParams,
    EdiMap,
    Event,
    EventArray,
    ExposureWindow,
    GrayImage,
    IntegrationMode,
    SensorGeometry,
    cumulative_sum,
    signed_contrast,
)

LN2 = math.log(2.0)


@pytest.mark.parametrize(
    "p, cp, expected",
    [
        (1, ContrastParams(0.26, -0.26), 0.26),
        (-1, ContrastParams(0.26, -0.26), -0.26),
        (1, ContrastParams(LN2, -LN2), 0.6931471805599453),
    ],
)
def test_signed_contrast(p, cp, expected):
    assert signed_contrast(p, cp) == expected


def test_signed_contrast_rejects_zero_polarity():
    with pytest.raises(ValueError):
        signed_contrast(0, ContrastParams(0.1, -0.1))


def test_cumulative_sum_examples(ln2_contrast):
    assert cumulative_sum([], ln2_contrast, 0, 100) == 0
    two_on = [Event(1, 0, 0, 1), Event(3, 0, 0, 1)]
    assert cumulative_sum(two_on, ln2_contrast, 0, 4) == pytest.approx(2 * LN2, abs=0)
    assert cumulative_sum([Event(2, 0, 0, -1)], ln2_contrast, 0, 4) == -LN2


def test_cumulative_sum_boundaries_exclusive_from_inclusive_to(ln2_contrast):
    ev = [Event(5, 0, 0, 1)]
    assert cumulative_sum(ev, ln2_contrast, 5, 10) == 0
    assert cumulative_sum(ev, ln2_contrast, 0, 5) == LN2


def test_cumulative_sum_rejects_unsorted(ln2_contrast):
    with pytest.raises(OrderingError):
        cumulative_sum([Event(3, 0, 0, 1), Event(1, 0, 0, 1)], ln2_contrast, 0, 10)


def test_cumulative_sum_rejects_reversed_interval(ln2_contrast):
    with pytest.raises(WindowError):
        cumulative_sum([], ln2_contrast, 10, 0)


# dyadic thresholds keep every partial sum exact so additivity can be tested with ==
_events = st.lists(
    st.tuples(st.integers(0, 1000), st.sampled_from([1, -1])), max_size=60
).map(lambda xs: [Event(t, 0, 0, p) for t, p in sorted(xs, key=lambda e: e[0])])


@given(_events, st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000))
def test_cumulative_sum_additive(events, a, b, c):
    a, b, c = sorted((a, b, c))
    cp = ContrastParams(0.25, -0.5)
    assert cumulative_sum(events, cp, a, b) + cumulative_sum(events, cp, b, c) == cumulative_sum(
        events, cp, a, c
    )


@given(_events, st.floats(0.01, 2.0))
def test_cumulative_sum_polarity_flip_negates(events, c):
    cp = ContrastParams(c, -c)
    flipped = [Event(e.t, e.x, e.y, -e.p) for e in events]
    swapped = ContrastParams(-cp.c_off, -cp.c_on)
    assert cumulative_sum(flipped, swapped, 0, 1000) == -cumulative_sum(events, cp, 0, 1000)


@settings(max_examples=50)
@given(st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6))
def test_gray_image_8bit_roundtrip(values):
    img = GrayImage(values, width=3, height=2)
    back = GrayImage.from_uint8(img.quantize())
    assert np.max(np.abs(back.data - img.data)) <= 1 / 510 + 1e-15


def test_quantize_rounds_half_up():
    assert GrayImage([[0.5]]).quantize()[0, 0] == 128
    assert list(GrayImage([[0.0, 1.0]]).quantize()[0]) == [0, 255]


def test_gray_image_validation():
    with pytest.raises(ValueError):
        GrayImage([[1.5]])
    with pytest.raises(ValueError):
        GrayImage([[float("nan")]])
    with pytest.raises(GeometryError):
        GrayImage([0.1, 0.2, 0.3], width=2, height=2)


def test_gray_image_is_immutable():
    img = GrayImage([[0.1, 0.2]])
    with pytest.raises(ValueError):
        img.data[0, 0] = 0.5


def test_type_invariants():
    with pytest.raises(GeometryError):
        SensorGeometry(0, 5)
    with pytest.raises(DomainError):
        ContrastParams(0.0, -0.1)
    with pytest.raises(DomainError):
        ContrastParams(0.1, 0.1)
    with pytest.raises(WindowError):
        ExposureWindow(10, 10)
    with pytest.raises(ValueError):
        Event(0, 0, 0, 0)
    with pytest.raises(ValueError):
        EdiMap(1, 1, [0.0])
    assert IntegrationMode.parse("COUNT") is IntegrationMode.COUNT
    with pytest.raises(ValueError):
        IntegrationMode.parse("dt")


def test_event_array_roundtrip_and_window_slice():
    evs = [Event(1, 0, 0, 1), Event(5, 1, 0, -1), Event(5, 2, 1, 1), Event(9, 0, 1, -1)]
    arr = EventArray.from_events(evs)
    assert list(arr) == evs
    assert arr[1] == evs[1]
    inside = arr.in_window(ExposureWindow(1, 5))
    assert list(inside) == evs[1:3]
    with pytest.raises(GeometryError):
        arr.check_geometry(SensorGeometry(2, 2))
    with pytest.raises(OrderingError):
        EventArray.from_events(evs[::-1]).check_sorted()
