"""Adaptive order-0 range coder (32-bit, carry-less).

Byte-oriented coder in the Subbotin style: low/range are 32-bit registers,
a byte is emitted whenever the top byte of the interval is settled, and the
interval is forcibly shrunk when range falls below 2**16 instead of
propagating carries.  All arithmetic is masked to 32 bits so the bitstream is
reproducible bit for bit by any implementation following the same rules.

Quantisation indices are folded to non-negative integers (0, -1, 1, -2, ...
-> 0, 1, 2, 3, ...).  Folded values below ``ESCAPE`` are coded directly with an
adaptive model; larger values send ``ESCAPE``, then the bit length of the
excess with a second adaptive model, then the remaining bits raw.
"""

from __future__ import annotations

import numpy as np

MASK32 = 0xFFFFFFFF
TOP = 1 << 24
BOT = 1 << 16
FREQ_LIMIT = 1 << 16

ALPHABET = 24
ESCAPE = ALPHABET - 1
LENGTH_ALPHABET = 33
INCREMENT = 24


class RangeDecodeError(ValueError):
    """Raised when the bitstream ends before the requested symbols are decoded."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial if partial is not None else []


class AdaptiveModel:
    """Frequency table with count halving once the total would exceed 2**16."""

    __slots__ = ("freq", "total", "inc")

    def __init__(self, size: int, inc: int = INCREMENT):
        self.freq = [1] * size
        self.total = size
        self.inc = inc

    def copy(self) -> "AdaptiveModel":
        m = AdaptiveModel.__new__(AdaptiveModel)
        m.freq = self.freq[:]
        m.total = self.total
        m.inc = self.inc
        return m

    def update(self, sym: int):
        self.freq[sym] += self.inc
        self.total += self.inc
        if self.total > FREQ_LIMIT - self.inc:
            f = [(x + 1) >> 1 for x in self.freq]
            self.freq = f
            self.total = sum(f)


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = MASK32
        self.out = bytearray()

    def _normalize(self):
        low, rng, out = self.low, self.range, self.out
        while True:
            if (low ^ ((low + rng) & MASK32)) < TOP:
                pass
            elif rng < BOT:
                rng = (-low) & (BOT - 1)
            else:
                break
            out.append(low >> 24)
            low = (low << 8) & MASK32
            rng = (rng << 8) & MASK32
        self.low, self.range = low, rng

    def encode(self, cum: int, freq: int, total: int):
        r = self.range // total
        self.low = (self.low + r * cum) & MASK32
        self.range = r * freq
        self._normalize()

    def encode_bits(self, value: int, nbits: int):
        """Raw bits, at most 16 per call."""
        r = self.range >> nbits
        self.low = (self.low + value * r) & MASK32
        self.range = r
        self._normalize()

    def encode_symbol(self, model: AdaptiveModel, sym: int):
        freq = model.freq
        cum = sum(freq[:sym])
        self.encode(cum, freq[sym], model.total)
        model.update(sym)

    def size_if_finished(self) -> int:
        return len(self.out) + 4

    def state(self):
        return self.low, self.range, len(self.out)

    def restore(self, state):
        self.low, self.range, n = state
        del self.out[n:]

    def finish(self) -> bytes:
        low = self.low
        for _ in range(4):
            self.out.append(low >> 24)
            low = (low << 8) & MASK32
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data: bytes, strict: bool = True):
        self.data = data
        self.pos = 0
        self.strict = strict
        self.low = 0
        self.range = MASK32
        self.code = 0
        self.exhausted = False
        for _ in range(4):
            self.code = (self.code << 8) | self._byte()

    def _byte(self) -> int:
        if self.pos >= len(self.data):
            self.exhausted = True
            if self.strict:
                raise RangeDecodeError("range-coded stream truncated")
            return 0
        b = self.data[self.pos]
        self.pos += 1
        return b

    def _normalize(self):
        while True:
            low, rng = self.low, self.range
            if (low ^ ((low + rng) & MASK32)) < TOP:
                pass
            elif rng < BOT:
                self.range = (-low) & (BOT - 1)
            else:
                break
            self.code = ((self.code << 8) | self._byte()) & MASK32
            self.low = (low << 8) & MASK32
            self.range = (self.range << 8) & MASK32

    def decode_freq(self, total: int) -> int:
        self._r = self.range // total
        v = ((self.code - self.low) & MASK32) // self._r
        return v if v < total else total - 1

    def consume(self, cum: int, freq: int):
        r = self._r
        self.low = (self.low + r * cum) & MASK32
        self.range = r * freq
        self._normalize()

    def decode_bits(self, nbits: int) -> int:
        r = self.range >> nbits
        v = ((self.code - self.low) & MASK32) // r
        if v >> nbits:
            v = (1 << nbits) - 1
        self.low = (self.low + v * r) & MASK32
        self.range = r
        self._normalize()
        return v

    def decode_symbol(self, model: AdaptiveModel) -> int:
        target = self.decode_freq(model.total)
        freq = model.freq
        cum = 0
        sym = 0
        last = len(freq) - 1
        while sym < last and cum + freq[sym] <= target:
            cum += freq[sym]
            sym += 1
        self.consume(cum, freq[sym])
        model.update(sym)
        return sym


def fold(v: int) -> int:
    return 2 * v if v >= 0 else -2 * v - 1


def unfold(u: int) -> int:
    return u >> 1 if not u & 1 else -((u + 1) >> 1)


class IndexCoder:
    """Codes signed integers on top of a range encoder/decoder pair of models."""

    def __init__(self):
        self.main = AdaptiveModel(ALPHABET)
        self.length = AdaptiveModel(LENGTH_ALPHABET)

    def copy(self) -> "IndexCoder":
        c = IndexCoder.__new__(IndexCoder)
        c.main = self.main.copy()
        c.length = self.length.copy()
        return c

    def encode(self, enc: RangeEncoder, v: int):
        u = 2 * v if v >= 0 else -2 * v - 1
        if u < ESCAPE:
            enc.encode_symbol(self.main, u)
            return
        enc.encode_symbol(self.main, ESCAPE)
        e = u - ESCAPE + 1  # >= 1
        nbits = e.bit_length()
        if nbits >= LENGTH_ALPHABET:
            raise ValueError(f"index {v} outside the coder's range")
        enc.encode_symbol(self.length, nbits)
        rest = e - (1 << (nbits - 1))
        nb = nbits - 1
        while nb > 0:
            take = min(nb, 16)
            nb -= take
            enc.encode_bits((rest >> nb) & ((1 << take) - 1), take)

    def decode(self, dec: RangeDecoder) -> int:
        u = dec.decode_symbol(self.main)
        if u == ESCAPE:
            nbits = dec.decode_symbol(self.length)
            if nbits == 0:
                nbits = 1  # corrupted stream; keep going
            rest = 0
            nb = nbits - 1
            while nb > 0:
                take = min(nb, 16)
                nb -= take
                rest = (rest << take) | dec.decode_bits(take)
            u = (1 << (nbits - 1)) + rest + ESCAPE - 1
        return u >> 1 if not u & 1 else -((u + 1) >> 1)


def entropy_encode(indices) -> bytes:
    """Range-code a sequence of signed integers; output length is 8*len bits."""
    enc = RangeEncoder()
    coder = IndexCoder()
    for v in np.asarray(indices, dtype=np.int64).tolist():
        coder.encode(enc, v)
    return enc.finish()


def entropy_decode(data: bytes, count: int, strict: bool = True) -> np.ndarray:
    """Inverse of :func:`entropy_encode`.

    With ``strict`` a stream that runs out of bytes raises
    :class:`RangeDecodeError`; otherwise missing bytes read as zero.
    """
    dec = RangeDecoder(bytes(data), strict=strict)
    coder = IndexCoder()
    out = []
    try:
        for _ in range(count):
            out.append(coder.decode(dec))
    except RangeDecodeError as exc:
        raise RangeDecodeError(str(exc), partial=out) from None
    return np.asarray(out, dtype=np.int64)


def coded_size_bits(indices) -> int:
    return 8 * len(entropy_encode(indices))


def pack_segments(indices, capacity_bytes: int) -> list[tuple[int, int, bytes]]:
    """Split a sequence into independently decodable range-coded segments.

    Each segment restarts the coder and models, so losing one segment never
    affects the others.  Returns (start, count, payload) triples with every
    payload at most ``capacity_bytes`` long.
    """
    values = np.asarray(indices, dtype=np.int64).tolist()
    if capacity_bytes < 6:
        raise ValueError("segment capacity too small to hold any symbol")
    segments = []
    n = len(values)
    start = 0
    while start < n:
        enc = RangeEncoder()
        coder = IndexCoder()
        i = start
        while i < n:
            near = enc.size_if_finished() + 8 > capacity_bytes
            if near:
                snap = (enc.state(), coder.copy())
            coder.encode(enc, values[i])
            if near and enc.size_if_finished() > capacity_bytes:
                enc.restore(snap[0])
                coder = snap[1]
                break
            i += 1
        if i == start:
            raise ValueError(f"symbol {values[start]} does not fit in an empty segment")
        segments.append((start, i - start, enc.finish()))
        start = i
    return segments
