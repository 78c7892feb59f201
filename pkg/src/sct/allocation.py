"""Importance-driven resource-block assignment and MCS selection.

Streams are served in order of decreasing importance and take RBs in order of
decreasing gain until the capacity they hold reaches their share of the total
capacity; the least important stream absorbs whatever is left.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .channel import ChannelRealization, capacities


class AllocationError(ValueError):
    pass


@dataclass(frozen=True)
class McsEntry:
    order: int
    rate: Fraction
    design_snr_db: float

    @property
    def bits_per_symbol(self) -> int:
        return {2: 1, 4: 2, 16: 4}[self.order]

    @property
    def efficiency(self) -> float:
        return self.bits_per_symbol * float(self.rate)

    @property
    def name(self) -> str:
        mod = {2: "BPSK", 4: "QPSK", 16: "16QAM"}[self.order]
        return f"{mod}-{self.rate.numerator}/{self.rate.denominator}"


# Thresholds: Es/N0 (dB) where the bundled n=648 codes first reach a
# post-decoding BER of 1e-4 on a 0.25 dB grid, plus 0.5 dB margin
# (sct.modular.calibrate).
DEFAULT_MCS_TABLE = (
    McsEntry(2, Fraction(1, 2), 0.0),
    McsEntry(4, Fraction(1, 2), 3.0),
    McsEntry(4, Fraction(3, 4), 6.25),
    McsEntry(16, Fraction(1, 2), 8.75),
    McsEntry(16, Fraction(3, 4), 12.0),
)


def check_table(table) -> tuple[McsEntry, ...]:
    table = tuple(table)
    if not table:
        raise AllocationError("MCS table is empty")
    eff = [e.efficiency for e in table]
    thr = [e.design_snr_db for e in table]
    if eff != sorted(eff) or any(b <= a for a, b in zip(thr, thr[1:])):
        raise AllocationError("MCS table must be sorted by efficiency with increasing thresholds")
    return table


@dataclass
class StreamAllocation:
    stream_id: int
    score: float
    rbs: list[int]
    symbols: int
    capacity: float
    target: float
    mcs: McsEntry | None = None
    mcs_flagged: bool = False


@dataclass
class AllocationPlan:
    streams: list[StreamAllocation]
    mode: str = "modular"
    side_info_rbs: list[int] = field(default_factory=list)
    symbols_per_rb: int = 1

    @property
    def side_info_symbols(self) -> int:
        return len(self.side_info_rbs) * self.symbols_per_rb

    @property
    def total_symbols(self) -> int:
        return sum(s.symbols for s in self.streams) + self.side_info_symbols

    def stream(self, stream_id: int) -> StreamAllocation:
        for s in self.streams:
            if s.stream_id == stream_id:
                return s
        raise KeyError(stream_id)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stream_id", "score", "rbs", "symbols", "mcs"])
        if self.side_info_rbs:
            w.writerow(["side_info", "", " ".join(map(str, self.side_info_rbs)),
                        self.side_info_symbols, "BPSK-1/2"])
        for s in self.streams:
            w.writerow([s.stream_id, f"{s.score:.6f}", " ".join(map(str, s.rbs)), s.symbols,
                        s.mcs.name if s.mcs else ""])
        return buf.getvalue()


def rb_order(real: ChannelRealization, exclude=()) -> list[int]:
    """RB indices by decreasing |h|, ties broken by lower index."""
    mag = np.abs(real.gains)
    excl = set(exclude)
    return [int(k) for k in sorted(range(len(mag)), key=lambda k: (-mag[k], k)) if k not in excl]


def reserve_side_info(real: ChannelRealization, symbols_needed: int) -> list[int]:
    """Best RBs (at least one) carrying ``symbols_needed`` side-info symbols."""
    n = max(1, -(-symbols_needed // real.spec.symbols_per_rb))
    if n >= real.num_rbs:
        raise AllocationError(f"side information needs {n} RBs, only {real.num_rbs} exist")
    return rb_order(real)[:n]


def allocate_rbs(scores, real: ChannelRealization, stream_ids=None, reserved=(),
                 mode: str = "modular") -> AllocationPlan:
    """Assign every non-reserved RB to a stream.

    Streams go in decreasing score (ties: lower id first).  Each takes the
    best remaining RBs until its capacity reaches ``score * C_total``, but
    never so many that a later positive-score stream would be left without
    an RB.  The last stream takes the remainder.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if stream_ids is None:
        stream_ids = list(range(len(scores)))
    stream_ids = list(stream_ids)
    if len(stream_ids) != len(scores) or len(scores) == 0:
        raise AllocationError("need one score per stream")
    if np.any(scores < 0) or abs(scores.sum() - 1.0) > 1e-6:
        raise AllocationError("scores must be a probability vector")
    avail = rb_order(real, exclude=reserved)
    positive = int(np.count_nonzero(scores > 0))
    if len(avail) < positive:
        raise AllocationError(
            f"RB shortage: {positive} streams with positive score but only {len(avail)} RBs "
            f"available ({len(reserved)} reserved for side information)")
    cap = capacities(real)
    c_total = float(cap[avail].sum())
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], stream_ids[i]))
    result = {}
    pos = 0
    later_positive = positive
    for rank, i in enumerate(order):
        if scores[i] > 0:
            later_positive -= 1
        target = scores[i] * c_total
        if rank == len(order) - 1:
            take = avail[pos:]
        else:
            limit = len(avail) - pos - later_positive
            take = []
            got = 0.0
            while len(take) < limit and got < target - 1e-9 * max(c_total, 1.0):
                k = avail[pos + len(take)]
                take.append(k)
                got += cap[k]
        pos += len(take)
        result[i] = StreamAllocation(
            stream_id=stream_ids[i], score=float(scores[i]), rbs=list(take),
            symbols=len(take) * real.spec.symbols_per_rb,
            capacity=float(cap[take].sum()) if take else 0.0, target=target)
    return AllocationPlan([result[i] for i in range(len(scores))], mode=mode,
                          side_info_rbs=list(reserved),
                          symbols_per_rb=real.spec.symbols_per_rb)


def select_mcs(rbs, real: ChannelRealization, table=DEFAULT_MCS_TABLE,
               snr_db: float | None = None) -> tuple[McsEntry, bool]:
    """Highest-efficiency entry whose threshold is met on the weakest RB.

    Returns (entry, flagged); flagged means no entry qualified and the lowest
    one was used anyway.  ``snr_db`` overrides the realisation's SNR (used
    when the sender plans for a different operating point).
    """
    table = check_table(table)
    if not rbs:
        return table[0], True
    r = real if snr_db is None else real.with_snr(snr_db)
    eff = float(np.min(r.effective_snr_db(np.asarray(rbs))))
    best = None
    for e in table:
        if e.design_snr_db <= eff:
            best = e
    if best is None:
        return table[0], True
    return best, False


def common_mcs(snr_db: float, table=DEFAULT_MCS_TABLE) -> tuple[McsEntry, bool]:
    """One entry for the whole link, chosen from the average SNR."""
    table = check_table(table)
    best = None
    for e in table:
        if e.design_snr_db <= snr_db:
            best = e
    return (table[0], True) if best is None else (best, False)


def bit_budget(symbols: int, mcs: McsEntry, overhead_bits: int = 0) -> int:
    """Source bits available: m * bits/symbol * rate - overhead, floored at 0."""
    gross = Fraction(symbols * mcs.bits_per_symbol) * mcs.rate
    return max(0, int(gross) - overhead_bits)


def assign_mcs(plan: AllocationPlan, real: ChannelRealization, table=DEFAULT_MCS_TABLE,
               policy: str = "per_stream", planning_snr_db: float | None = None) -> AllocationPlan:
    for s in plan.streams:
        if policy == "per_stream":
            s.mcs, s.mcs_flagged = select_mcs(s.rbs, real, table, snr_db=planning_snr_db)
        elif policy == "common":
            snr = real.spec.snr_db if planning_snr_db is None else planning_snr_db
            s.mcs, s.mcs_flagged = common_mcs(snr, table)
        else:
            raise AllocationError(f"unknown MCS policy {policy!r}")
    return plan


def check_invariants(plan: AllocationPlan, real: ChannelRealization) -> list[str]:
    """Return violated invariants (empty list when all hold)."""
    problems = []
    used = [k for s in plan.streams for k in s.rbs] + list(plan.side_info_rbs)
    if sorted(used) != list(range(real.num_rbs)):
        problems.append("RB assignment is not a partition of all RBs")
    mag = np.abs(real.gains)
    ranked = sorted(plan.streams, key=lambda s: (-s.score, s.stream_id))
    for a, b in zip(ranked, ranked[1:]):
        if a.rbs and b.rbs and mag[a.rbs].min() < mag[b.rbs].max() - 1e-12:
            problems.append(f"stream {a.stream_id} holds a worse RB than stream {b.stream_id}")
    for a in plan.streams:
        for b in plan.streams:
            if a.score > b.score and a.capacity < b.capacity - 1e-9:
                problems.append(f"stream {a.stream_id} outranks {b.stream_id} but holds less capacity")
    for s in plan.streams:
        if s.score > 0 and s.symbols == 0:
            problems.append(f"stream {s.stream_id} has positive score but no symbols")
    return problems
