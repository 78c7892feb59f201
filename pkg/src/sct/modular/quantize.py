"""Mid-tread uniform quantiser and the step-size ladder used for rate fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DELTA_MIN = 1.0
LADDER_STEPS = 48  # Δ_min * 2**(j/4) for j = 0..48, i.e. up to 4096


@dataclass(frozen=True)
class QuantizedStream:
    indices: np.ndarray
    delta: float

    def dequantize(self) -> np.ndarray:
        return dequantize(self)


def quantize(x, delta: float) -> QuantizedStream:
    if delta <= 0:
        raise ValueError("quantiser step must be positive")
    x = np.asarray(x, dtype=np.float64)
    # round half away from zero
    idx = np.sign(x) * np.floor(np.abs(x) / delta + 0.5)
    return QuantizedStream(idx.astype(np.int64), float(delta))


def dequantize(q: QuantizedStream) -> np.ndarray:
    return q.indices.astype(np.float64) * q.delta


def ladder_delta(j: int, delta_min: float = DELTA_MIN) -> float:
    return delta_min * 2.0 ** (j / 4.0)


def fit_step(stream, bit_budget: float, size_fn, delta_min: float = DELTA_MIN,
             steps: int = LADDER_STEPS):
    """Smallest ladder step whose coded size fits the budget.

    ``size_fn(indices)`` returns the coded size in bits.  Coded size is
    non-increasing along the ladder in practice, which the binary search
    relies on.  Returns ``(j, delta)``; ``(None, None)`` means the stream
    cannot be sent at all (zero budget), and ``j == steps`` with an
    over-budget size is returned when even the coarsest step does not fit.
    """
    if bit_budget <= 0:
        return None, None
    x = np.asarray(stream, dtype=np.float64)

    def fits(j):
        return size_fn(quantize(x, ladder_delta(j, delta_min)).indices) <= bit_budget

    if fits(0):
        return 0, ladder_delta(0, delta_min)
    lo, hi = 0, steps  # fits(lo) is False
    if not fits(hi):
        return hi, ladder_delta(hi, delta_min)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fits(mid):
            hi = mid
        else:
            lo = mid
    return hi, ladder_delta(hi, delta_min)
