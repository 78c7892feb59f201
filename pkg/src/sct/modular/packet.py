"""CRC-16 packets.

Packet layout, MSB first, exactly ``k`` bits (the LDPC message length)::

    stream id   u16
    sequence    u16
    step index  u8     (quantiser ladder position, 255 = not applicable)
    start       u32    first covered symbol in the stream's coded order
    count       u16    number of covered symbols
    payload     k - 104 bits, zero padded
    crc         u16    CRC-16/CCITT-FALSE over header and payload
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HEADER_BITS = 16 + 16 + 8 + 32 + 16
CRC_BITS = 16
CRC_POLY = 0x1021
CRC_INIT = 0xFFFF


def _crc_table():
    table = []
    for b in range(256):
        c = b << 8
        for _ in range(8):
            c = ((c << 1) ^ CRC_POLY) if c & 0x8000 else (c << 1)
        table.append(c & 0xFFFF)
    return table


_TABLE = _crc_table()


def crc16(data: bytes, crc: int = CRC_INIT) -> int:
    """CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection)."""
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _TABLE[((crc >> 8) ^ b) & 0xFF]
    return crc


def crc16_bits(bits) -> int:
    """Same CRC over an arbitrary-length MSB-first bit sequence."""
    bits = np.asarray(bits, dtype=np.uint8)
    whole = (len(bits) // 8) * 8
    crc = crc16(np.packbits(bits[:whole]).tobytes())
    for b in bits[whole:].tolist():
        top = ((crc >> 15) & 1) ^ b
        crc = (crc << 1) & 0xFFFF
        if top:
            crc ^= CRC_POLY
    return crc


def payload_capacity(k: int) -> int:
    cap = k - HEADER_BITS - CRC_BITS
    if cap <= 0:
        raise ValueError(f"codeword message of {k} bits cannot hold a packet")
    return cap


def _uint_bits(v: int, width: int) -> list[int]:
    return [(v >> (width - 1 - i)) & 1 for i in range(width)]


def _bits_uint(bits) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


@dataclass
class Packet:
    stream_id: int
    seq: int
    start: int
    count: int
    payload: np.ndarray = field(repr=False)  # bits
    step_index: int = 255
    crc_ok: bool = True

    def to_bits(self, k: int) -> np.ndarray:
        cap = payload_capacity(k)
        if len(self.payload) > cap:
            raise ValueError(f"payload of {len(self.payload)} bits exceeds capacity {cap}")
        head = (_uint_bits(self.stream_id, 16) + _uint_bits(self.seq, 16)
                + _uint_bits(self.step_index, 8) + _uint_bits(self.start, 32)
                + _uint_bits(self.count, 16))
        body = np.zeros(HEADER_BITS + cap, dtype=np.uint8)
        body[:HEADER_BITS] = head
        body[HEADER_BITS:HEADER_BITS + len(self.payload)] = self.payload
        crc = crc16_bits(body)
        return np.concatenate([body, np.array(_uint_bits(crc, 16), dtype=np.uint8)])

    @classmethod
    def from_bits(cls, bits) -> "Packet":
        bits = np.asarray(bits, dtype=np.uint8)
        body, tail = bits[:-CRC_BITS], bits[-CRC_BITS:]
        ok = crc16_bits(body) == _bits_uint(tail)
        h = body[:HEADER_BITS].tolist()
        return cls(stream_id=_bits_uint(h[0:16]), seq=_bits_uint(h[16:32]),
                   step_index=_bits_uint(h[32:40]), start=_bits_uint(h[40:72]),
                   count=_bits_uint(h[72:88]), payload=body[HEADER_BITS:].copy(),
                   crc_ok=ok)

    @property
    def payload_bytes(self) -> bytes:
        return np.packbits(self.payload).tobytes()


def packetize(bits, stream_id: int, capacity: int, step_index: int = 255) -> list[Packet]:
    """Chunk a bitstream into fixed-capacity packets, the last one zero padded.

    Coverage (start, count) is expressed in bits of the input stream.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    packets = []
    for seq, start in enumerate(range(0, len(bits), capacity)):
        chunk = bits[start:start + capacity]
        payload = np.zeros(capacity, dtype=np.uint8)
        payload[:len(chunk)] = chunk
        packets.append(Packet(stream_id, seq, start, len(chunk), payload, step_index))
    return packets


def depacketize(packets: list[Packet]):
    """Reassemble the bitstream; returns (bits, erased-bit mask)."""
    if not packets:
        return np.zeros(0, dtype=np.uint8), np.zeros(0, dtype=bool)
    total = max(p.start + p.count for p in packets)
    bits = np.zeros(total, dtype=np.uint8)
    erased = np.ones(total, dtype=bool)
    for p in packets:
        if p.crc_ok:
            bits[p.start:p.start + p.count] = p.payload[:p.count]
            erased[p.start:p.start + p.count] = False
    return bits, erased


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))
