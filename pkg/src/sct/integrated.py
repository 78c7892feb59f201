"""Analog joint source-channel coding surrogate.

A stream's coefficients are laid out position-major (all DC terms, then the
first AC term of every cell, ...), the first ``2*m`` reals are packed two per
complex symbol, scaled to unit average symbol power and sent as-is.  The
receiver applies the per-coefficient linear MMSE estimator using prior
second moments that both ends share as local knowledge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AnalogBlock:
    stream_id: int
    kept: int
    scale: float
    symbols: np.ndarray = field(repr=False)
    shape: tuple[int, int] = (0, 0)  # (cells, C) of the source payload

    @property
    def used_symbols(self) -> int:
        return (self.kept + 1) // 2

    def header(self) -> str:
        return f"{self.stream_id} {self.kept} {self.scale:.17g}"


def flatten(payload) -> np.ndarray:
    """(cells, C) -> position-major vector."""
    return np.asarray(payload, dtype=np.float64).T.ravel()


def unflatten(vec, shape) -> np.ndarray:
    cells, dim = shape
    return np.asarray(vec).reshape(dim, cells).T


def encode_analog(payload, m: int, stream_id: int = 0) -> AnalogBlock:
    if m < 1:
        raise ValueError("an analog block needs at least one symbol")
    payload = np.asarray(payload, dtype=np.float64)
    x = flatten(payload)
    kept = min(2 * m, x.size)
    xk = x[:kept]
    if kept % 2:
        xk = np.append(xk, 0.0)
    n_sym = xk.size // 2
    energy = float(np.dot(xk, xk))
    scale = np.sqrt(n_sym / energy) if energy > 0 else 1.0
    sym = np.zeros(m, dtype=complex)
    sym[:n_sym] = scale * (xk[0::2] + 1j * xk[1::2])
    return AnalogBlock(stream_id, kept, float(scale), sym, payload.shape)


def decode_analog(received, block: AnalogBlock, gains, noise_var: float, prior_var) -> np.ndarray:
    """LMMSE estimate of the stream payload, shape (cells, C).

    ``gains`` holds the channel gain seen by each received symbol and
    ``prior_var`` the zero-mean prior variance of every position-major
    coefficient.  Coefficients that were not sent come back as the prior
    mean, zero.
    """
    n = block.shape[0] * block.shape[1]
    prior = np.broadcast_to(np.asarray(prior_var, dtype=np.float64), (n,))
    y = np.asarray(received, dtype=complex)[:block.used_symbols]
    h = np.broadcast_to(np.asarray(gains, dtype=complex), np.shape(received))[:block.used_symbols]
    z = np.conj(h) * y
    zr = np.empty(2 * len(z))
    zr[0::2], zr[1::2] = z.real, z.imag
    h2 = np.repeat(np.abs(h) ** 2, 2)
    kept = block.kept
    zr, h2 = zr[:kept], h2[:kept]
    sx = prior[:kept]
    g = block.scale
    # each real dimension carries half the complex noise variance
    denom = h2 * g * g * sx + noise_var / 2.0
    with np.errstate(invalid="ignore", divide="ignore"):
        est = np.where(denom > 0, g * sx * zr / denom, 0.0)
    out = np.zeros(n)
    out[:kept] = est
    return unflatten(out, block.shape)


def prior_variances(cells) -> np.ndarray:
    """Second moment per embedding position over all cells, shape (C,)."""
    c = np.asarray(cells, dtype=np.float64)
    return np.mean(c * c, axis=0)


def stream_priors(position_var, n_cells: int) -> np.ndarray:
    """Expand per-position priors to the position-major layout of a stream."""
    return np.repeat(np.asarray(position_var, dtype=np.float64), n_cells)
