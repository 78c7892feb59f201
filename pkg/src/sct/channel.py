"""OFDM resource-block channel: block-flat per-RB gains plus complex AWGN.

The transmitter and receiver both know every RB gain (genie CSI).  Signal
power is normalised to one, so the noise variance follows directly from the
configured SNR.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ChannelSpec:
    num_rbs: int
    symbols_per_rb: int
    snr_db: float
    fading: str = "awgn"
    seed: int = 0

    def __post_init__(self):
        if self.num_rbs < 1 or self.symbols_per_rb < 1:
            raise ValueError("need at least one RB and one symbol per RB")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.fading not in ("awgn", "rayleigh_block"):
            raise ValueError(f"unknown fading model {self.fading!r}")

    @property
    def total_symbols(self) -> int:
        return self.num_rbs * self.symbols_per_rb


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray = field(repr=False)
    noise_var: float
    spec: ChannelSpec

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.spec.snr_db / 10.0)

    @property
    def num_rbs(self) -> int:
        return len(self.gains)

    def with_snr(self, snr_db: float) -> "ChannelRealization":
        """Same gains, different noise level."""
        spec = ChannelSpec(self.spec.num_rbs, self.spec.symbols_per_rb, snr_db,
                           self.spec.fading, self.spec.seed)
        return ChannelRealization(self.gains, 10.0 ** (-snr_db / 10.0), spec)

    def effective_snr_db(self, k) -> np.ndarray:
        g2 = np.abs(self.gains[np.asarray(k)]) ** 2
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(g2 * self.snr_linear)

    def to_text(self) -> str:
        rows = [f"{k} {h.real:.17g} {h.imag:.17g}" for k, h in enumerate(self.gains)]
        return "\n".join(rows) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_text())


def realize(spec: ChannelSpec) -> ChannelRealization:
    if spec.fading == "awgn":
        gains = np.ones(spec.num_rbs, dtype=complex)
    else:
        rng = np.random.default_rng([spec.seed, 0x5243])
        gains = (rng.standard_normal(spec.num_rbs)
                 + 1j * rng.standard_normal(spec.num_rbs)) / np.sqrt(2.0)
    gains.setflags(write=False)
    return ChannelRealization(gains, 10.0 ** (-spec.snr_db / 10.0), spec)


def load_realization(path, spec: ChannelSpec) -> ChannelRealization:
    data = np.loadtxt(path, ndmin=2)
    order = np.argsort(data[:, 0])
    gains = data[order, 1] + 1j * data[order, 2]
    return ChannelRealization(gains, 10.0 ** (-spec.snr_db / 10.0), spec)


def rb_capacity(real: ChannelRealization, k: int) -> float:
    """Shannon capacity of RB ``k`` in bits: N_sym * log2(1 + |h|^2 SNR)."""
    if not 0 <= k < real.num_rbs:
        raise IndexError(f"RB index {k} out of range [0, {real.num_rbs})")
    return real.spec.symbols_per_rb * float(np.log2(1.0 + abs(real.gains[k]) ** 2 * real.snr_linear))


def capacities(real: ChannelRealization) -> np.ndarray:
    return real.spec.symbols_per_rb * np.log2(1.0 + np.abs(real.gains) ** 2 * real.snr_linear)


def transmit(symbols, real: ChannelRealization, rb_of_symbol, rng=None,
             noise_var: float | None = None) -> np.ndarray:
    """y_j = h_{rb(j)} x_j + n_j with n_j ~ CN(0, noise_var)."""
    x = np.asarray(symbols, dtype=complex)
    rb = np.asarray(rb_of_symbol)
    if rb.shape != x.shape:
        raise ValueError("every symbol needs an RB index")
    if rb.size and (rb.min() < 0 or rb.max() >= real.num_rbs):
        raise ValueError("symbol mapped to a non-existent RB")
    nv = real.noise_var if noise_var is None else noise_var
    y = real.gains[rb] * x
    if nv > 0:
        if rng is None:
            rng = np.random.default_rng([real.spec.seed, 0x4E4F])
        n = (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)) * np.sqrt(nv / 2.0)
        y = y + n
    return y
