"""BER simulation for MCS threshold calibration.

Run as ``python -m sct.modular.calibrate`` to print, per MCS, the lowest SNR
on a grid at which the post-decoding BER reaches the target.
"""

from __future__ import annotations

import argparse
from fractions import Fraction

import numpy as np

from ..allocation import DEFAULT_MCS_TABLE, McsEntry
from .interleave import deinterleave, interleave
from .ldpc import RATE_TO_CODE, load_code
from .modulation import bits_per_symbol, demodulate_llr, modulate

TARGET_BER = 1e-4


def code_for(mcs: McsEntry):
    key = (mcs.rate.numerator, mcs.rate.denominator)
    return load_code(RATE_TO_CODE[key])


def simulate_ber(mcs: McsEntry, snr_db: float, codewords: int = 200, seed: int = 0,
                 bit_seed: int = 0x1EAF):
    """Post-decoding (bit error rate, frame error rate) over AWGN."""
    code = code_for(mcs)
    rng = np.random.default_rng([seed, int(round(snr_db * 100)) & 0xFFFF, mcs.order])
    msg = rng.integers(0, 2, (codewords, code.k))
    cw = code.encode(msg)
    tx = np.concatenate([interleave(c, bit_seed) for c in cw])
    sym = modulate(tx, mcs.order)
    nv = 10.0 ** (-snr_db / 10.0)
    y = sym + (rng.standard_normal(sym.shape) + 1j * rng.standard_normal(sym.shape)) * np.sqrt(nv / 2)
    llr = demodulate_llr(y, mcs.order, 1.0, nv).reshape(codewords, code.n)
    llr = np.stack([deinterleave(v, bit_seed) for v in llr])
    hard, _, _ = code.decode(llr)
    err = code.extract(hard) != msg
    return float(err.mean()), float(err.any(axis=1).mean())


def find_threshold(mcs: McsEntry, grid, codewords: int = 200, target: float = TARGET_BER):
    for snr in grid:
        ber, fer = simulate_ber(mcs, snr, codewords)
        if ber <= target:
            return snr, ber, fer
    return None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--codewords", type=int, default=300)
    ap.add_argument("--step", type=float, default=0.25)
    args = ap.parse_args(argv)
    entries = [McsEntry(2, Fraction(1, 2), 0), McsEntry(4, Fraction(1, 2), 0),
               McsEntry(4, Fraction(2, 3), 0), McsEntry(4, Fraction(3, 4), 0),
               McsEntry(16, Fraction(1, 2), 0), McsEntry(16, Fraction(2, 3), 0),
               McsEntry(16, Fraction(3, 4), 0)]
    for e in entries:
        # start just below the Shannon limit for the spectral efficiency
        lo = np.floor(10 * np.log10(2 ** e.efficiency - 1) * 4) / 4
        grid = np.arange(lo, lo + 8.0, args.step)
        res = find_threshold(e, grid, args.codewords)
        print(e.name, bits_per_symbol(e.order), res)
    print("current table:", [(e.name, e.design_snr_db) for e in DEFAULT_MCS_TABLE])


if __name__ == "__main__":
    main()
