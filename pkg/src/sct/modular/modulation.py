"""Gray-mapped BPSK / QPSK / 16-QAM and exact (log-sum-exp) LLR demapping."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

LLR_CLAMP = 30.0
ORDERS = (2, 4, 16)


def bits_per_symbol(order: int) -> int:
    _check(order)
    return {2: 1, 4: 2, 16: 4}[order]


def _check(order):
    if order not in ORDERS:
        raise ValueError(f"unsupported modulation order {order}; expected one of {ORDERS}")


def _pam_gray(b) -> int:
    # recursive Gray-labelled PAM level in {±1, ±3, ...}
    if len(b) > 1:
        return (1 - 2 * b[0]) * (2 ** (len(b) - 1) - _pam_gray(b[1:]))
    return 1 - 2 * b[0]


@lru_cache(maxsize=None)
def constellation(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit-energy points and their bit labels (MSB first), indexed by label."""
    _check(order)
    q = bits_per_symbol(order)
    labels = np.array([[(n >> (q - 1 - i)) & 1 for i in range(q)] for n in range(order)],
                      dtype=np.uint8)
    if order == 2:
        pts = 1.0 - 2.0 * labels[:, 0].astype(float) + 0j
    else:
        rows = labels.astype(int).tolist()
        re = np.array([_pam_gray(lab[0::2]) for lab in rows], dtype=float)
        im = np.array([_pam_gray(lab[1::2]) for lab in rows], dtype=float)
        pts = re + 1j * im
        pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    labels.setflags(write=False)
    return pts, labels


def modulate(bits, order: int) -> np.ndarray:
    q = bits_per_symbol(order)
    b = np.asarray(bits, dtype=np.int64).ravel()
    if b.size % q:
        raise ValueError(f"bit count {b.size} is not a multiple of {q}")
    pts, _ = constellation(order)
    idx = b.reshape(-1, q) @ (1 << np.arange(q - 1, -1, -1))
    return pts[idx]


def demodulate_llr(received, order: int, h=1.0, noise_var: float = 1.0) -> np.ndarray:
    """Exact bit LLRs for y = h*x + n, n ~ CN(0, noise_var).

    Positive LLR means bit 0 is more likely.  h may be a scalar or one gain
    per received symbol.
    """
    pts, labels = constellation(order)
    y = np.asarray(received, dtype=complex).ravel()
    h = np.broadcast_to(np.asarray(h, dtype=complex), y.shape)
    q = labels.shape[1]
    if noise_var <= 0:
        # noiseless limit: hard decisions at the clamp value
        d = np.abs(y[:, None] - h[:, None] * pts[None, :]) ** 2
        best = labels[np.argmin(d, axis=1)]
        return np.where(best == 0, LLR_CLAMP, -LLR_CLAMP).ravel()
    metric = -np.abs(y[:, None] - h[:, None] * pts[None, :]) ** 2 / noise_var
    llr = np.empty((y.size, q))
    for i in range(q):
        zero = labels[:, i] == 0
        llr[:, i] = logsumexp(metric[:, zero], axis=1) - logsumexp(metric[:, ~zero], axis=1)
    return np.clip(llr, -LLR_CLAMP, LLR_CLAMP).ravel()
