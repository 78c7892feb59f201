import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sct.allocation import (DEFAULT_MCS_TABLE, AllocationError, McsEntry, allocate_rbs, assign_mcs,
                            bit_budget, check_invariants, check_table, common_mcs, reserve_side_info,
                            select_mcs)
from sct.channel import ChannelRealization, ChannelSpec, capacities, realize


def _real(gains, snr=5.0, nsym=4):
    g = np.asarray(gains, complex)
    return ChannelRealization(g, 10 ** (-snr / 10), ChannelSpec(len(g), nsym, snr, "rayleigh_block"))


def oracle(scores, real, eps=1e-9):
    """Enumerate every score-ordered prefix partition of the gain-sorted RBs
    and keep those satisfying the cumulative-capacity rule."""
    n, k = len(scores), real.num_rbs
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    rbs = sorted(range(k), key=lambda j: (-abs(real.gains[j]), j))
    cap = capacities(real)
    total = cap.sum()
    positive = sum(s > 0 for s in scores)
    found = []
    for cuts in itertools.combinations_with_replacement(range(k + 1), n - 1):
        bounds = (0,) + cuts + (k,)
        blocks = [rbs[bounds[r]:bounds[r + 1]] for r in range(n)]
        ok = True
        for r in range(n - 1):
            i = order[r]
            target = scores[i] * total
            got = cap[blocks[r]].sum()
            after = sum(scores[order[q]] > 0 for q in range(r + 1, n))
            limit = k - bounds[r] - after
            minimal = not blocks[r] or cap[blocks[r][:-1]].sum() < target - eps * total
            reached = got >= target - eps * total
            if not minimal or not (reached or len(blocks[r]) == limit) or len(blocks[r]) > limit:
                ok = False
                break
        if ok:
            found.append({order[r]: blocks[r] for r in range(n)})
    assert positive <= k
    return found


def test_spec_examples():
    real = realize(ChannelSpec(4, 10, 5.0))
    plan = allocate_rbs([0.75, 0.25], real)
    assert [len(s.rbs) for s in plan.streams] == [3, 1]
    plan = allocate_rbs([1.0], real)
    assert plan.streams[0].rbs == [0, 1, 2, 3]
    for n, k in ((3, 9), (4, 12), (2, 7), (5, 14)):
        plan = allocate_rbs([1 / n] * n, realize(ChannelSpec(k, 1, 5.0)))
        counts = [len(s.rbs) for s in plan.streams]
        assert max(counts) - min(counts) <= 1 and sum(counts) == k
    # the smallest-prefix rule gives every leading stream ceil(k/n) RBs, so the
    # remainder stream can trail by more than one RB
    plan = allocate_rbs([1 / 3] * 3, realize(ChannelSpec(10, 1, 5.0)))
    assert [len(s.rbs) for s in plan.streams] == [4, 4, 2]


def test_shortage_rejected():
    with pytest.raises(AllocationError, match="shortage"):
        allocate_rbs([0.5, 0.3, 0.2], realize(ChannelSpec(2, 1, 0.0)))
    with pytest.raises(AllocationError):
        allocate_rbs([0.5, 0.6], realize(ChannelSpec(2, 1, 0.0)))


def test_oracle_agreement_randomised():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        k = int(rng.integers(n, 9))
        raw = rng.random(n) * (rng.random(n) > 0.15)
        if raw.sum() == 0:
            raw[0] = 1.0
        scores = raw / raw.sum()
        if rng.random() < 0.3:
            real = realize(ChannelSpec(k, 3, float(rng.uniform(-5, 20))))
        else:
            real = realize(ChannelSpec(k, 3, float(rng.uniform(-5, 20)), "rayleigh_block",
                                       int(rng.integers(1 << 30))))
        plan = allocate_rbs(scores, real)
        found = oracle(list(scores), real)
        assert len(found) == 1
        assert {i: s.rbs for i, s in enumerate(plan.streams)} == found[0]


@given(st.lists(st.floats(0.01, 1), min_size=1, max_size=5), st.integers(5, 20),
       st.floats(-5, 25), st.integers(0, 2**31))
def test_invariants_property(raw, k, snr, seed):
    scores = np.array(raw) / sum(raw)
    real = realize(ChannelSpec(k, 4, snr, "rayleigh_block", seed))
    plan = allocate_rbs(scores, real)
    used = sorted(r for s in plan.streams for r in s.rbs)
    assert used == list(range(k))
    assert plan.total_symbols == real.spec.total_symbols
    assert all(s.symbols > 0 for s in plan.streams)
    problems = check_invariants(plan, real)
    assert not [p for p in problems if "worse RB" in p or "partition" in p]
    plan2 = allocate_rbs(scores, real)
    assert [s.rbs for s in plan2.streams] == [s.rbs for s in plan.streams]


@given(st.lists(st.floats(0.01, 1), min_size=1, max_size=5), st.integers(5, 30), st.floats(-5, 25))
def test_monotone_matching_awgn(raw, k, snr):
    scores = np.array(raw) / sum(raw)
    real = realize(ChannelSpec(k, 4, snr))
    assert check_invariants(allocate_rbs(scores, real), real) == []


def test_side_info_reservation():
    real = _real([0.5, 2.0, 1.0, 1.5], nsym=10)
    assert reserve_side_info(real, 0) == [1]
    assert reserve_side_info(real, 15) == [1, 3]
    plan = allocate_rbs([0.6, 0.4], real, reserved=[1])
    assert 1 not in [r for s in plan.streams for r in s.rbs]
    assert plan.side_info_symbols == 10 and plan.total_symbols == 40
    assert check_invariants(plan, real) == []
    with pytest.raises(AllocationError):
        reserve_side_info(real, 40)


def test_bit_budget_examples():
    qpsk12 = McsEntry(4, Fraction(1, 2), 0.0)
    assert bit_budget(648, qpsk12) == 648
    assert bit_budget(648, qpsk12, overhead_bits=1000) == 0
    assert bit_budget(324, McsEntry(16, Fraction(3, 4), 0.0)) == 972


def test_select_mcs_examples():
    spec_table = (McsEntry(2, Fraction(1, 2), -1.0), McsEntry(4, Fraction(1, 2), 2.0),
                  McsEntry(4, Fraction(3, 4), 5.0), McsEntry(16, Fraction(1, 2), 8.0),
                  McsEntry(16, Fraction(3, 4), 12.0))
    for table in (spec_table, DEFAULT_MCS_TABLE):
        e, flag = select_mcs([0], realize(ChannelSpec(1, 1, 1.0)), table)
        assert e.name == "BPSK-1/2" and not flag
        e, flag = select_mcs([0], realize(ChannelSpec(1, 1, 20.0)), table)
        assert e.name == "16QAM-3/4" and not flag
        e, flag = select_mcs([0], realize(ChannelSpec(1, 1, -10.0)), table)
        assert e.name == "BPSK-1/2" and flag
    # minimum over the stream's RBs decides
    real = _real([1.0, 0.1], snr=10.0)
    assert select_mcs([0], real)[0].name == "16QAM-1/2"
    assert select_mcs([0, 1], real)[1] is True
    assert common_mcs(9.0)[0].name == "16QAM-1/2"
    with pytest.raises(AllocationError):
        select_mcs([0], real, table=())


def test_table_checks():
    with pytest.raises(AllocationError):
        check_table([McsEntry(4, Fraction(1, 2), 3.0), McsEntry(2, Fraction(1, 2), 4.0)])
    with pytest.raises(AllocationError):
        check_table([McsEntry(2, Fraction(1, 2), 3.0), McsEntry(4, Fraction(1, 2), 3.0)])


def test_assign_and_csv():
    real = realize(ChannelSpec(6, 8, 9.0))
    plan = assign_mcs(allocate_rbs([0.5, 0.5], real), real)
    assert all(s.mcs.name == "16QAM-1/2" for s in plan.streams)
    plan = assign_mcs(plan, real, policy="common", planning_snr_db=3.5)
    assert all(s.mcs.name == "QPSK-1/2" for s in plan.streams)
    text = plan.to_csv().splitlines()
    assert text[0] == "stream_id,score,rbs,symbols,mcs"
    assert text[1] == "0,0.500000,0 1 2,24,QPSK-1/2"
    with pytest.raises(AllocationError):
        assign_mcs(plan, real, policy="best")
