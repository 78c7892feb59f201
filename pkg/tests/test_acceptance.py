"""Acceptance criteria, one test per criterion.

Each test prints a ``CRITERION nn: PASS/FAIL`` line (also collected in the
terminal summary) before asserting.
"""

import itertools
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import record
from sct.allocation import allocate_rbs
from sct.channel import ChannelSpec, realize, transmit
from sct.correction import inpaint
from sct.guidance import FeatureMap
from sct.harness import ExperimentConfig, prepare_source, run_trial, sweep
from sct.integrated import decode_analog, encode_analog
from sct.metrics import psnr
from sct.modular.ldpc import LdpcCode
from sct.modular.modulation import demodulate_llr, modulate
from sct.modular.rangecoder import RangeDecodeError, entropy_decode, entropy_encode
from sct.synthesis import encode_label_map, inverse_transform
from test_allocation import oracle

SNR_GRID = list(range(-5, 11))


@pytest.fixture(scope="module")
def cliff_sweep():
    cfg = ExperimentConfig(synthetic="two_region", size=(64, 64), scheme="both", rate_r=2.0,
                           planning_snr_db=4.0, symbols_per_rb=16)
    res = sweep(cfg, SNR_GRID, [2.0], trials=20, keep_reports=True)
    assert not res.errors
    return res


# 1 -------------------------------------------------------------------------


def test_c01_analog_mmse_law():
    t0 = time.perf_counter()
    n = 2**20
    rng = np.random.default_rng(1)
    x = rng.standard_normal((n // 64, 64))
    m = n // 2  # bandwidth matched: every coefficient is sent
    blk = encode_analog(x, m)
    real = realize(ChannelSpec(1, m, 1.0))
    y = transmit(blk.symbols, real, np.zeros(m, dtype=int), rng=rng)
    est = decode_analog(y, blk, real.gains[0], real.noise_var, 1.0)
    mse = float(np.mean((x - est) ** 2))
    dt = time.perf_counter() - t0
    want = 1 / (1 + 10 ** 0.1)
    ok = blk.kept == n and abs(mse / want - 1) <= 0.02 and dt < 10
    record(1, ok, f"MSE {mse:.5f} vs {want:.5f} over {n} coefficients in {dt:.2f} s")
    assert ok


# 2 -------------------------------------------------------------------------


def test_c02_ldpc_ml_oracle():
    H = np.array([[1, 1, 0, 1, 1, 0, 0], [1, 0, 1, 1, 0, 1, 0], [0, 1, 1, 1, 0, 0, 1]])
    code = LdpcCode(H)
    msgs = np.array(list(itertools.product([0, 1], repeat=4)))
    cws = code.encode(msgs)
    syndrome_ok = not code.syndrome(cws).any()
    rng = np.random.default_rng(2)
    trials = 10**4
    sent = cws[rng.integers(0, 16, trials)]
    nv = 10 ** (-4 / 10)
    y = modulate(sent.ravel(), 2)
    y = y + (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)) * np.sqrt(nv / 2)
    llr = demodulate_llr(y, 2, 1.0, nv).reshape(trials, 7)
    hard, _, _ = code.decode(llr)
    # exhaustive ML over the 16 codewords (equivalently the 2^7 words restricted to the code)
    ml = cws[np.argmax(llr @ (1 - 2.0 * cws).T, axis=1)]
    agree = float((hard == ml).all(axis=1).mean())
    ok = syndrome_ok and agree >= 0.99
    record(2, ok, f"BP = ML in {agree:.2%} of {trials} trials at 4 dB, syndrome zero: {syndrome_ok}")
    assert ok


# 3 -------------------------------------------------------------------------


def test_c03_entropy_coder():
    rng = np.random.default_rng(3)
    worst = 0.0
    for src in ("laplace1", "laplace6", "geometric", "uniform"):
        n = 10**5
        if src.startswith("laplace"):
            x = np.round(rng.laplace(0, float(src[7:]), n))
        elif src == "geometric":
            x = rng.geometric(0.3, n) - 1
        else:
            x = rng.integers(-40, 41, n)
        x = x.astype(np.int64)
        _, counts = np.unique(x, return_counts=True)
        h = float(-(counts * np.log2(counts / n)).sum())
        bits = 8 * len(entropy_encode(x))
        worst = max(worst, (bits - 64) / h)
    lossless = 0
    for t in range(1000):
        n = int(rng.integers(0, 400))
        x = np.round(rng.laplace(0, rng.uniform(0.1, 500), n)).astype(np.int64)
        lossless += np.array_equal(entropy_decode(entropy_encode(x), n), x)
    ok = worst <= 1.02 and lossless == 1000
    record(3, ok, f"worst (bits-64)/H = {worst:.4f}; lossless {lossless}/1000")
    assert ok


# 4 -------------------------------------------------------------------------


def test_c04_error_propagation():
    rng = np.random.default_rng(4)
    fracs = []
    for _ in range(100):
        x = np.round(rng.laplace(0, 4, 2000)).astype(np.int64)
        data = bytearray(entropy_encode(x))
        pos_bit = int(rng.integers(8 * 4, 8 * (len(data) - 4)))
        data[pos_bit // 8] ^= 0x80 >> (pos_bit % 8)
        try:
            out = entropy_decode(bytes(data), len(x), strict=False)
        except RangeDecodeError as e:
            out = np.asarray(e.partial)
        # first symbol whose coding depends on the flipped bit
        first = int(pos_bit / (8 * len(data)) * len(x))
        tail = slice(first, len(x))
        got = np.full(len(x), np.iinfo(np.int64).min)
        got[:len(out)] = out
        fracs.append(float(np.mean(got[tail] != x[tail])))
    mean = float(np.mean(fracs))
    ok = mean >= 0.5
    record(4, ok, f"mean corrupted fraction after the flip {mean:.3f} over 100 trials")
    assert ok


# 5 -------------------------------------------------------------------------


def test_c05_allocation_oracle(cliff_sweep):
    rng = np.random.default_rng(5)
    agree = 0
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        k = int(rng.integers(n, 9))
        raw = rng.random(n) * (rng.random(n) > 0.15)
        if raw.sum() == 0:
            raw[0] = 1.0
        scores = raw / raw.sum()
        fading = "awgn" if rng.random() < 0.3 else "rayleigh_block"
        real = realize(ChannelSpec(k, 3, float(rng.uniform(-5, 20)), fading,
                                   int(rng.integers(1 << 30))))
        plan = allocate_rbs(scores, real)
        found = oracle(list(scores), real)
        agree += len(found) == 1 and {i: s.rbs for i, s in enumerate(plan.streams)} == found[0]
    fading = ExperimentConfig(synthetic="quad", size=(64, 64), scheme="integrated", rate_r=1.0,
                              fading="rayleigh_block")
    faded = sweep(fading, SNR_GRID, [1.0], trials=10, keep_reports=True)
    reps = cliff_sweep.reports + faded.reports
    bad = [r for r in reps if r.allocation_problems]
    ok = (agree == 1000 and not bad and not faded.errors
          and len(reps) == (2 * 20 + 10) * len(SNR_GRID))
    record(5, ok, f"greedy = oracle on {agree}/1000 instances; invariants violated on "
                  f"{len(bad)}/{len(reps)} AWGN and block-Rayleigh sweep trials")
    assert ok


# 6 -------------------------------------------------------------------------


def _curve(res, scheme):
    rows = sorted((r for r in res.rows if r["scheme"] == scheme), key=lambda r: r["snr_db"])
    return np.array([r["psnr_mean"] for r in rows])


def test_c06_cliff_vs_graceful(cliff_sweep):
    mod, integ = _curve(cliff_sweep, "modular"), _curve(cliff_sweep, "integrated")
    span = 2  # grid step is 1 dB
    drop_mod = float(np.max(mod[span:] - mod[:-span]))
    drop_int = float(np.max(integ[span:] - integ[:-span]))
    below = np.flatnonzero(mod < mod.max() - 3.0)
    collapse = SNR_GRID[below.max()] if below.size else None
    region = slice(0, below.max() + 1) if below.size else slice(0, 0)
    wins = bool(below.size) and bool(np.all(integ[region] > mod[region]))
    ok = drop_mod > drop_int and wins
    record(6, ok, f"max 2 dB drop modular {drop_mod:.2f} dB vs integrated {drop_int:.2f} dB; "
                  f"collapse at {collapse} dB, integrated ahead at and below it: {wins}")
    print("modular   ", np.round(mod, 2).tolist())
    print("integrated", np.round(integ, 2).tolist())
    assert ok


# 7 -------------------------------------------------------------------------


def test_c07_semantic_protection_ordering():
    snr = 6.0
    cfg = ExperimentConfig(synthetic="quad", size=(64, 64), scheme="modular", rate_r=1.0,
                           fading="rayleigh_block", snr_db=snr, mcs_policy="common",
                           planning_snr_db=snr + 2.0)
    hits, top_f, bot_f = 0, [], []
    for seed in range(100):
        rep = run_trial(cfg, seed, "modular")
        ranked = sorted(rep.streams, key=lambda s: (-s.score, s.stream_id))
        top, bot = ranked[0], ranked[-1]
        hits += top.failure_rate <= bot.failure_rate
        top_f.append(top.failure_rate)
        bot_f.append(bot.failure_rate)
    ok = hits >= 90
    record(7, ok, f"top-score failure <= bottom-score failure in {hits}/100 trials "
                  f"(mean {np.mean(top_f):.3f} vs {np.mean(bot_f):.3f})")
    assert ok


# 8 -------------------------------------------------------------------------


def _correction_trials(kind):
    src = prepare_source(ExperimentConfig(synthetic=kind, size=(128, 128)))
    fmap, labels, kb = src.fmap, src.cell_labels, src.kb
    # what the pipeline holds for a lost cell before correction: level-shift DC, zero AC
    grey = np.zeros(fmap.dim)
    grey[:fmap.channels] = 128.0 * fmap.block
    improved, gains = 0, []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        stream = src.streams[seed % len(src.streams)]
        frac = rng.uniform(0.02, 0.30)
        lost = rng.choice(stream.cells, max(1, int(frac * len(stream.cells))), replace=False)
        mask = np.zeros(fmap.grid, bool)
        mask.reshape(-1)[lost] = True
        pre = fmap.copy()
        pre.coeffs[mask] = grey
        post = inpaint(pre, mask, labels, kb=kb)
        p0 = psnr(src.image, inverse_transform(pre, src.shape))
        p1 = psnr(src.image, inverse_transform(post, src.shape))
        improved += p1 >= p0
        gains.append(p1 - p0)
    empty = inpaint(fmap, np.zeros(fmap.grid, bool), labels, kb=kb)
    return improved, float(np.mean(gains)), np.array_equal(empty.coeffs, fmap.coeffs)


def test_c08_correction_gain():
    improved, gain, idempotent = _correction_trials("natural")
    # reported for reference: textures anti-correlated between neighbouring cells
    wave, _, _ = _correction_trials("two_region")
    ok = improved >= 95 and idempotent
    record(8, ok, f"post >= pre in {improved}/100 trials on 1/f texture (mean gain {gain:.2f} dB; "
                  f"{wave}/100 on the periodic two_region image); empty mask bit-exact: {idempotent}")
    assert ok


# 9 -------------------------------------------------------------------------


def test_c09_selective_bandwidth():
    base = ExperimentConfig(synthetic="balanced", size=(256, 256), scheme="integrated",
                            snr_db=10.0)
    seeds = range(3)

    def measure(cfg):
        reps = [run_trial(cfg, s) for s in seeds]
        return (float(np.mean([r.preserved_psnr for r in reps])),
                float(np.mean([r.rate_achieved for r in reps])))

    r_overall = 0.3
    p_o, ra_o = measure(replace(base, rate_r=r_overall))
    found = None
    for f in np.arange(0.30, 1.0001, 0.02):
        sel = replace(base, mode="selective", preserved_labels=(0,), rate_r=r_overall * f)
        p_s, ra_s = measure(sel)
        if p_s >= p_o - 0.5:
            found = (ra_s, p_s)
            break
    ratio = found[0] / ra_o if found else float("inf")
    lab = np.zeros((1024, 2048), np.int64)
    lab[:, 1024:] = 1
    cmp_ratio = lab.size * 8 / (8 * len(encode_label_map(lab)))
    ok = ratio <= 0.6 and cmp_ratio > 100
    detail = (f"selective R {found[0]:.4f} ({found[1]:.2f} dB) vs overall R {ra_o:.4f} "
              f"({p_o:.2f} dB): ratio {ratio:.3f}" if found else "no selective R matched")
    record(9, ok, detail + f"; label map compression {cmp_ratio:.0f}x")
    assert ok


# 10 ------------------------------------------------------------------------


def test_c10_determinism_and_rd_monotonicity():
    base = ExperimentConfig(synthetic="two_region", size=(64, 64), snr_db=5.0)
    configs = [replace(base, scheme="modular"), replace(base, scheme="integrated"),
               replace(base, size=(128, 128), mode="selective", preserved_labels=(1,),
                       scheme="integrated", rate_r=0.4)]
    same = all(run_trial(c, 7).to_dict() == run_trial(c, 7).to_dict() for c in configs)
    grid = np.linspace(0.05, 0.5, 6)
    res = sweep(replace(base, scheme="integrated"), [5.0], grid, trials=5)
    means = [r["psnr_mean"] for r in sorted(res.rows, key=lambda r: r["rate_r"])]
    mono = all(b >= a for a, b in zip(means, means[1:]))
    ok = same and mono and not res.errors
    record(10, ok, f"bit-identical reports: {same}; PSNR over R grid "
                   f"{[round(m, 2) for m in means]} non-decreasing: {mono}")
    assert ok
