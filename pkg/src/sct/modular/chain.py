"""Per-stream digital chain.

Transmit: shuffle the stream's cells, quantise with the finest ladder step
that fits the codeword budget, range-code into independently decodable
segments that each fill one packet, protect every packet with an LDPC
codeword, bit-interleave and map to symbols.  The stream's symbol block is
zero padded to its allocation so the symbol count always matches the plan.

Receive: demap, decode, check CRCs, entropy-decode intact packets, and report
which cells were lost so the corrector can restore them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..allocation import McsEntry
from .calibrate import code_for
from .interleave import deinterleave, interleave, permutation
from .modulation import demodulate_llr, modulate
from .packet import Packet, bytes_to_bits, payload_capacity
from .quantize import DELTA_MIN, LADDER_STEPS, fit_step, ladder_delta, quantize
from .rangecoder import entropy_decode, pack_segments

BIT_SEED = 0x1EAF
# per-stream header: stream id u16, step exponent u8 (255 = untransmitted),
# coefficient count u32, little-endian
STREAM_HEADER = struct.Struct("<HBI")


def cell_seed(stream_id: int):
    return [int(stream_id), 0xCE11]


@dataclass
class StreamTx:
    """Transmitter-side result; the fields below ``mcs`` double as the
    control-plane metadata the receiver is given."""

    stream_id: int
    symbols: np.ndarray = field(repr=False)
    mcs: McsEntry
    cell_ids: np.ndarray = field(repr=False)    # global cell ids, stream order
    dim: int = 64
    packets_sent: int = 0
    step_index: int | None = None
    codeword_budget: int = 0
    truncated: bool = False
    segments: list = field(default_factory=list, repr=False)

    @property
    def untransmitted(self) -> bool:
        return self.step_index is None

    @property
    def delta(self) -> float | None:
        return None if self.step_index is None else ladder_delta(self.step_index)


@dataclass
class StreamRx:
    payload: np.ndarray = field(repr=False)     # (cells, C), zeros where lost
    packets: list
    coverage: dict
    lost_cells: np.ndarray                        # global cell ids


def _segment_cache():
    cache = {}

    def segments(indices: np.ndarray, cap_bytes: int):
        key = (indices.tobytes(), cap_bytes)
        if key not in cache:
            if len(cache) > 256:
                cache.clear()
            cache[key] = pack_segments(indices, cap_bytes)
        return cache[key]

    return segments


_segments = _segment_cache()


def encode_stream(payload, cell_ids, stream_id: int, m_symbols: int, mcs: McsEntry,
                  delta_min: float = DELTA_MIN) -> StreamTx:
    payload = np.asarray(payload, dtype=np.float64)
    n_cells, dim = payload.shape
    code = code_for(mcs)
    cap_bits = payload_capacity(code.k)
    cap_bytes = cap_bits // 8
    n_cw = (m_symbols * mcs.bits_per_symbol) // code.n
    perm = permutation(n_cells, cell_seed(stream_id))
    seq = payload[perm].ravel()
    tx = StreamTx(stream_id, np.zeros(m_symbols, dtype=complex), mcs,
                  np.asarray(cell_ids)[perm], dim, codeword_budget=n_cw)
    if n_cells == 0:
        return tx

    def size_fn(indices):
        return len(_segments(np.ascontiguousarray(indices), cap_bytes)) * cap_bits

    j, delta = fit_step(seq, n_cw * cap_bits, size_fn, delta_min=delta_min)
    if j is None:
        return tx
    segs = _segments(quantize(seq, delta).indices, cap_bytes)
    tx.step_index = j
    tx.segments = segs
    if len(segs) > n_cw:
        tx.truncated = True
        segs = segs[:n_cw]
    tx.packets_sent = len(segs)
    if not segs:
        return tx
    words = []
    for s, (start, count, data) in enumerate(segs):
        pkt = Packet(stream_id, s, start, count, bytes_to_bits(data), step_index=j)
        words.append(pkt.to_bits(code.k))
    cws = code.encode(np.stack(words))
    bits = np.concatenate([interleave(c, BIT_SEED) for c in cws])
    sym = modulate(bits, mcs.order)
    tx.symbols[:len(sym)] = sym
    return tx


def stream_header(tx: StreamTx) -> bytes:
    j = 255 if tx.step_index is None else tx.step_index
    return STREAM_HEADER.pack(tx.stream_id, j, len(tx.cell_ids) * tx.dim)


def parse_stream_header(data: bytes) -> tuple[int, int | None, int]:
    sid, j, count = STREAM_HEADER.unpack(bytes(data[:STREAM_HEADER.size]))
    return sid, (None if j == 255 else j), count


def coverage_cells(tx: StreamTx, start: int, count: int) -> np.ndarray:
    """Global cell ids touched by coded positions [start, start + count)."""
    if count <= 0:
        return np.zeros(0, dtype=np.int64)
    first, last = start // tx.dim, (start + count - 1) // tx.dim
    return tx.cell_ids[first:last + 1]


def decode_stream(received, gains, noise_var: float, tx: StreamTx) -> StreamRx:
    """Receiver side.  Only control-plane fields of ``tx`` are used."""
    n_cells = len(tx.cell_ids)
    total = n_cells * tx.dim
    seq = np.zeros(total)
    have = np.zeros(total, dtype=bool)
    packets = []
    if tx.packets_sent:
        code = code_for(tx.mcs)
        n_sym = tx.packets_sent * code.n // tx.mcs.bits_per_symbol
        y = np.asarray(received)[:n_sym]
        h = np.broadcast_to(np.asarray(gains), np.shape(received))[:n_sym]
        llr = demodulate_llr(y, tx.mcs.order, h, noise_var).reshape(tx.packets_sent, code.n)
        llr = np.stack([deinterleave(v, BIT_SEED) for v in llr])
        hard, _, _ = code.decode(llr)
        for s, msg in enumerate(code.extract(hard)):
            pkt = Packet.from_bits(msg)
            if pkt.crc_ok and (pkt.stream_id != tx.stream_id or pkt.seq != s
                               or pkt.start + pkt.count > total or pkt.step_index > LADDER_STEPS):
                pkt.crc_ok = False  # undetected corruption caught by the header sanity check
            if not pkt.crc_ok:
                pkt = Packet(tx.stream_id, s, 0, 0, np.zeros(0, np.uint8), crc_ok=False)
            packets.append(pkt)
            if pkt.crc_ok and pkt.count:
                vals = entropy_decode(pkt.payload_bytes, pkt.count, strict=False)
                seq[pkt.start:pkt.start + pkt.count] = vals * ladder_delta(pkt.step_index)
                have[pkt.start:pkt.start + pkt.count] = True
    coverage = _infer_coverage(packets, tx, total)
    lost_pos = np.flatnonzero(~have)
    lost_cells = np.unique(tx.cell_ids[lost_pos // tx.dim]) if lost_pos.size else np.zeros(0, np.int64)
    payload = np.zeros((n_cells, tx.dim))
    payload[permutation(n_cells, cell_seed(tx.stream_id))] = seq.reshape(n_cells, tx.dim)
    return StreamRx(payload, packets, coverage, lost_cells)


def _infer_coverage(packets, tx: StreamTx, total: int) -> dict:
    """Cells each packet slot is responsible for, as seen by the receiver.

    A failed packet's header cannot be trusted, so it is charged with the
    whole gap between its intact neighbours.  Positions beyond the last
    packet sent are charged to a virtual ``missing`` slot.
    """
    spans = {}
    ok = [(p.seq, p.start, p.start + p.count) for p in packets if p.crc_ok]
    for p in packets:
        if p.crc_ok:
            spans[p.seq] = (p.start, p.start + p.count)
            continue
        before = [e for s, _, e in ok if s < p.seq]
        after = [b for s, b, _ in ok if s > p.seq]
        lo = max(before) if before else 0
        hi = min(after) if after else total
        spans[p.seq] = (lo, hi)
    if not packets:
        spans[0] = (0, total)
    elif packets[-1].crc_ok and spans[packets[-1].seq][1] < total:
        spans[len(packets)] = (spans[packets[-1].seq][1], total)
    coverage = {}
    for s, (lo, hi) in spans.items():
        coverage[(tx.stream_id, s)] = coverage_cells(tx, lo, hi - lo)
    return coverage
