"""Closed-form contrast thresholds from DVS bias settings.

The prefactor ``kappa_n * C2 / (kappa_p**2 * C1)`` scales the log ratio of
the ON/OFF comparator bias currents to the photoreceptor bias current.
Capacitances only enter as a ratio, so any consistent unit works.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, SignError
from .model import ContrastParams

# DAVIS346 values
DAVIS346_KAPPA = 0.7
DAVIS346_C1 = 130.0
DAVIS346_C2 = 6.0


@dataclass(frozen=True, slots=True)
class HardwareParams:
    kappa_n: float
    kappa_p: float
    cap_c1: float
    cap_c2: float
    i_d: float
    i_on: float
    i_off: float

    def __post_init__(self):
        for name in ("kappa_n", "kappa_p", "cap_c1", "cap_c2", "i_d", "i_on", "i_off"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
        for name in ("kappa_n", "kappa_p"):
            if getattr(self, name) > 1:
                raise DomainError(f"{name} must lie in (0, 1], got {getattr(self, name)}")

    @classmethod
    def from_ratios(cls, on_ratio: float, off_ratio: float, kappa_n=DAVIS346_KAPPA,
                    kappa_p=DAVIS346_KAPPA, cap_c1=DAVIS346_C1, cap_c2=DAVIS346_C2) -> "HardwareParams":
        """Build from pre-divided ratios ``i_on/i_d`` and ``i_off/i_d`` (i_d = 1)."""
        return cls(kappa_n, kappa_p, cap_c1, cap_c2, 1.0, on_ratio, off_ratio)


def contrast_prefactor(kappa_n: float, kappa_p: float, cap_c1: float, cap_c2: float) -> float:
    return (kappa_n * cap_c2) / (kappa_p * kappa_p * cap_c1)


def contrast_from_hardware(hp: HardwareParams) -> ContrastParams:
    if hp.i_on <= hp.i_d:
        raise SignError(f"i_on ({hp.i_on}) must exceed i_d ({hp.i_d}) for a positive ON threshold")
    if hp.i_off >= hp.i_d:
        raise SignError(f"i_off ({hp.i_off}) must be below i_d ({hp.i_d}) for a negative OFF threshold")
    alpha = contrast_prefactor(hp.kappa_n, hp.kappa_p, hp.cap_c1, hp.cap_c2)
    return ContrastParams(alpha * math.log(hp.i_on / hp.i_d), alpha * math.log(hp.i_off / hp.i_d))


def symmetric_contrast(c: float) -> ContrastParams:
    if not (math.isfinite(c) and c > 0):
        raise DomainError(f"contrast must be finite and > 0, got {c}")
    return ContrastParams(c, -c)
