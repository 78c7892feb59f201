"""Seeded permutation interleaver."""

import numpy as np


def permutation(n: int, seed: int) -> np.ndarray:
    # numpy's Generator.permutation is a Fisher-Yates shuffle
    return np.random.default_rng(seed).permutation(n)


def interleave(x, seed: int) -> np.ndarray:
    x = np.asarray(x)
    return x[permutation(len(x), seed)]


def deinterleave(y, seed: int, n: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if n is not None and len(y) != n:
        raise ValueError(f"deinterleave length mismatch: got {len(y)}, expected {n}")
    perm = permutation(len(y), seed)
    out = np.empty_like(y)
    out[perm] = y
    return out
