import math

import numpy as np
import pytest

from fastedi.model import ContrastParams, Event, EventArray, SensorGeometry

LN2 = math.log(2.0)


@pytest.fixture
def ln2_contrast():
    return ContrastParams(LN2, -LN2)


@pytest.fixture
def small_geom():
    return SensorGeometry(3, 2)


def brute_force_edi(events, t_start, t_end, cp, geom, mode):
    """Independent oracle: evaluate the integrand pixel by pixel in plain Python.

    TIME: sum exp(cumulative log change) * dt over the segments between
    distinct event timestamps. COUNT: after each event, add the latent frame.
    """
    evs = list(events)
    out = np.ones(geom.shape)
    for py in range(geom.height):
        for px in range(geom.width):
            mine = [e for e in evs if e.x == px and e.y == py]
            if not mine:
                continue
            if mode == "time":
                knots = sorted({t_start, t_end, *[e.t for e in evs]})
                total = 0.0
                for a, b in zip(knots, knots[1:]):
                    s = sum(cp.c_on if e.p > 0 else cp.c_off for e in mine if e.t <= a)
                    total += math.exp(s) * (b - a)
                out[py, px] = total / (t_end - t_start)
            else:
                total = 0.0
                for k in range(len(evs)):
                    s = sum(
                        cp.c_on if e.p > 0 else cp.c_off
                        for j, e in enumerate(evs[: k + 1])
                        if e.x == px and e.y == py
                    )
                    total += math.exp(s)
                out[py, px] = total / len(evs)
    return out


def random_stream(rng, geom, n, t_start, t_end, dup_fraction=0.2):
    """Sorted random in-window events, with some forced duplicate timestamps."""
    t = rng.integers(t_start + 1, t_end + 1, size=n)
    if n > 1:
        dup = rng.random(n) < dup_fraction
        t[1:][dup[1:]] = t[:-1][dup[1:]]
    t = np.sort(t)
    x = rng.integers(0, geom.width, size=n)
    y = rng.integers(0, geom.height, size=n)
    p = rng.choice([-1, 1], size=n)
    return EventArray(t, x, y, p)


# -- acceptance summary --------------------------------------------------------

ACCEPTANCE_CRITERIA = ("A1", "A2", "A3", "A4", "A5", "A6", "A7")
_acceptance_lines: dict[str, str] = {}


def record_acceptance(criterion: str, passed: bool, detail: str) -> None:
    line = f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}"
    _acceptance_lines[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    reports = (r for rs in terminalreporter.stats.values() for r in rs)
    if not any("test_acceptance.py" in getattr(r, "nodeid", "") for r in reports):
        return
    terminalreporter.section("acceptance")
    for c in ACCEPTANCE_CRITERIA:
        terminalreporter.write_line(_acceptance_lines.get(c, f"{c} FAIL: no result recorded"))
