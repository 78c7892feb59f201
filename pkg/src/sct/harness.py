"""End-to-end experiment runner.

One trial runs guidance -> allocation -> (modular | integrated) encoding ->
channel -> decoding -> error mask -> correction -> synthesis -> metrics.
Everything random is drawn from generators seeded by the trial seed, so a
(config, seed) pair always reproduces the same report.

Control-plane metadata (the stream cell partition, per-stream packet counts,
MCS, analog scale and kept count) is assumed to reach the receiver
error-free and is not charged to the channel.  The selective-mode label map
is real side information: it is packetised, LDPC coded at the lowest MCS and
sent over reserved resource blocks, and its symbols count towards R.
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import metrics
from .allocation import (DEFAULT_MCS_TABLE, McsEntry, allocate_rbs, assign_mcs, check_invariants,
                         check_table, reserve_side_info)
from .channel import ChannelSpec, realize, transmit
from .correction import error_mask, inpaint
from .guidance import (FeatureMap, ScalarMap, dominant_labels, entropy_map, forward_transform,
                       grid_labels, importance_map, minmax, pad_image, saliency_map,
                       score_streams, segment_streams)
from .imageio import read_image, read_label_map, read_matrix
from .integrated import decode_analog, encode_analog, stream_priors
from .modular.calibrate import code_for
from .modular.chain import decode_stream, encode_stream
from .modular.interleave import deinterleave, interleave
from .modular.modulation import demodulate_llr, modulate
from .modular.packet import Packet, bytes_to_bits, depacketize, packetize, payload_capacity
from .synthesis import (Fragment, KnowledgeBase, decode_label_map, encode_label_map, fuse,
                        inverse_transform, provenance_map, synthesize_regions)

SWEEP_HEADER = ("scheme", "snr_db", "rate_r", "trials", "psnr_mean", "psnr_std",
                "msssim_mean", "msssim_std")
SIDE_INFO_ID = 0xFFFF
SIDE_INFO_SEED = 0x51DE
MODES = ("overall", "selective")
SCHEMES = ("modular", "integrated", "both")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A module rejected its input; ``stage`` names the pipeline step."""

    def __init__(self, stage: str, cause: BaseException | str):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


@contextlib.contextmanager
def _stage(name: str, timings: dict | None = None):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as e:  # noqa: BLE001 - every rejection is re-raised with its stage
        raise StageError(name, e) from e
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    image: str | None = None
    labels: str | None = None
    activation: str | None = None
    synthetic: str = "two_region"
    size: tuple[int, int] = (64, 64)
    block: int = 8
    mode: str = "overall"
    scheme: str = "modular"
    alpha: float = 0.5
    attention: str = "saliency"
    rate_r: float = 0.5
    symbols_per_rb: int = 16
    snr_db: float = 5.0
    fading: str = "awgn"
    noise_var: float | None = None
    mcs_table: tuple = DEFAULT_MCS_TABLE
    mcs_policy: str = "per_stream"
    planning_snr_db: float | None = None
    delta_min: float = 1.0
    preserved_labels: tuple = ()
    correction: bool = True
    trials: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.rate_r > 0:
            raise ConfigError("rate_r must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.attention not in ("saliency", "activation"):
            raise ConfigError("attention must be 'saliency' or 'activation'")
        if self.attention == "activation" and not self.activation:
            raise ConfigError("attention = 'activation' needs an activation map path")
        if self.mode == "selective" and not self.preserved_labels:
            raise ConfigError("selective mode needs a non-empty preserved_labels list")
        if self.mcs_policy not in ("per_stream", "common"):
            raise ConfigError("mcs_policy must be 'per_stream' or 'common'")
        if self.noise_var is not None and self.noise_var < 0:
            raise ConfigError("noise_var must be non-negative")
        if self.delta_min <= 0:
            raise ConfigError("delta_min must be positive")
        for p in (self.image, self.labels, self.activation):
            if p and not Path(p).is_file():
                raise ConfigError(f"file not found: {p}")
        if self.labels and not self.image:
            raise ConfigError("a label map needs a source image")
        try:
            check_table(self.mcs_table)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def schemes(self) -> list[str]:
        return ["modular", "integrated"] if self.scheme == "both" else [self.scheme]


_SECTIONS = {
    "source": {"image", "labels", "activation", "synthetic", "size", "block"},
    "experiment": {"mode", "scheme", "alpha", "attention", "rate_r", "preserved_labels",
                   "correction", "trials", "seed"},
    "channel": {"symbols_per_rb", "snr_db", "fading", "noise_var"},
    "mcs": {"policy", "planning_snr_db", "delta_min", "table"},
}
_RENAMED = {("mcs", "policy"): "mcs_policy", ("mcs", "table"): "mcs_table"}


def _parse_table(rows) -> tuple[McsEntry, ...]:
    out = []
    for r in rows:
        try:
            out.append(McsEntry(int(r["order"]), Fraction(str(r["rate"])), float(r["snr_db"])))
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"bad MCS table row {r!r}: {e}") from e
    return tuple(out)


def config_from_dict(data: dict, base_dir=None) -> ExperimentConfig:
    """Build a config from parsed TOML (sectioned or flat keys)."""
    flat = {}
    known = {f.name for f in fields(ExperimentConfig)}
    for key, value in data.items():
        if key in _SECTIONS and isinstance(value, dict):
            for k, v in value.items():
                if k not in _SECTIONS[key]:
                    raise ConfigError(f"unknown key [{key}].{k}")
                flat[_RENAMED.get((key, k), k)] = v
        elif key in known:
            flat[key] = value
        else:
            raise ConfigError(f"unknown key {key!r}")
    if "mcs_table" in flat and not isinstance(flat["mcs_table"], tuple):
        flat["mcs_table"] = _parse_table(flat["mcs_table"])
    for key in ("size", "preserved_labels"):
        if key in flat:
            flat[key] = tuple(int(v) for v in flat[key])
    if base_dir is not None:
        for key in ("image", "labels", "activation"):
            if flat.get(key):
                flat[key] = str(Path(base_dir) / flat[key])
    return ExperimentConfig(**flat)


def load_config(path) -> ExperimentConfig:
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    path = Path(path)
    with path.open("rb") as f:
        data = tomllib.load(f)
    return config_from_dict(data, base_dir=path.parent)


# --- sources ----------------------------------------------------------------


def synthetic_source(kind: str = "two_region", size=(64, 64), seed: int = 7):
    """Deterministic test images with their label maps.

    ``two_region``: a smooth wavy left half next to a busier right half.
    ``quad``: 2 x 2 regions of increasing texture strength.
    ``balanced``: two halves with the same texture statistics, one the
    transpose of the other, so both regions carry similar importance.
    ``natural``: 1/f noise fields (the spectrum of natural photographs), a
    smooth dim left region next to a brighter, rougher right region.
    """
    h, w = size
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    rng = np.random.default_rng(seed)
    if kind == "two_region":
        labels = (x >= w // 2).astype(np.int64)
        left = 100 + 40 * np.sin(2 * np.pi * x / 23) * np.cos(2 * np.pi * y / 19)
        right = 150 + 45 * np.sin(2 * np.pi * (x + y) / 9) + 12 * rng.standard_normal((h, w))
        img = np.where(labels == 0, left, right)
    elif kind == "balanced":
        labels = (x >= w // 2).astype(np.int64)
        u, v = 2 * np.pi * x, 2 * np.pi * y
        left = 40 * np.sin(u / 11) * np.cos(v / 17)
        right = 40 * np.sin(v / 11) * np.cos(u / 17)
        img = 128 + np.where(labels == 0, left, right) + 10 * rng.standard_normal((h, w))
    elif kind == "natural":
        labels = (x >= w // 2).astype(np.int64)
        left = 90 + 20 * _pink_noise(rng, h, w, 1.5)
        right = 160 + 30 * _pink_noise(rng, h, w, 1.0)
        img = np.where(labels == 0, left, right)
    elif kind == "quad":
        labels = grid_labels(h, w, 2, 2)
        amp = np.array([4.0, 15.0, 35.0, 60.0])[labels]
        base = np.array([70.0, 110.0, 150.0, 120.0])[labels]
        img = (base + amp * np.sin(2 * np.pi * x / 7) * np.sin(2 * np.pi * y / 11)
               + 0.25 * amp * rng.standard_normal((h, w)))
    else:
        raise ConfigError(f"unknown synthetic source {kind!r}")
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), labels


def _pink_noise(rng, h, w, exponent):
    """Unit-variance noise with amplitude spectrum 1/f**exponent."""
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    f = np.hypot(fy, fx)
    f[0, 0] = np.inf
    spec = (rng.standard_normal(f.shape) + 1j * rng.standard_normal(f.shape)) / f ** exponent
    field = np.fft.irfft2(spec, s=(h, w))
    return (field - field.mean()) / field.std()


@dataclass
class Source:
    image: np.ndarray          # original samples
    shape: tuple[int, int]     # original height, width
    labels: np.ndarray         # padded per-pixel labels
    fmap: FeatureMap
    cell_labels: np.ndarray
    streams: list
    importance: ScalarMap
    kb: KnowledgeBase

    @property
    def pixels(self) -> int:
        return self.shape[0] * self.shape[1]


def _activation_map(path, grid, block) -> ScalarMap:
    p = Path(path)
    a = read_matrix(p) if p.suffix.lower() in (".txt", ".csv", ".dat") else read_image(p)
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 3:
        a = a.mean(axis=2)
    if a.shape != tuple(grid):
        pad, _ = pad_image(a, block)
        gh, gw = grid
        if pad.shape != (gh * block, gw * block):
            raise ValueError(f"activation map {a.shape} matches neither the cell grid {grid} "
                             "nor the image")
        a = pad.reshape(gh, block, gw, block).mean(axis=(1, 3))
    return ScalarMap(minmax(a), "activation")


@lru_cache(maxsize=16)
def _prepare(image, labels, activation, synthetic, size, block, alpha, attention) -> Source:
    if image:
        img = read_image(image)
        lab = read_label_map(labels) if labels else np.zeros(img.shape[:2], dtype=np.int64)
        if lab.shape != img.shape[:2]:
            raise ValueError(f"label map {lab.shape} does not match image {img.shape[:2]}")
    else:
        img, lab = synthetic_source(synthetic, size)
    padded, shape = pad_image(img, block)
    lab_p, _ = pad_image(lab, block)
    fmap = forward_transform(padded, block)
    streams = segment_streams(fmap, lab_p)
    att = (_activation_map(activation, fmap.grid, block) if attention == "activation"
           else saliency_map(padded, block))
    imap = importance_map(entropy_map(fmap), att, alpha)
    score_streams(streams, imap)
    cell_labels = np.zeros(fmap.grid, dtype=np.int64)
    for s in streams:
        cell_labels.reshape(-1)[s.cells] = s.label
    kb = KnowledgeBase.from_feature_map(fmap, cell_labels)
    return Source(img, shape, lab_p, fmap, cell_labels, streams, imap, kb)


def prepare_source(config: ExperimentConfig) -> Source:
    return _prepare(config.image, config.labels, config.activation, config.synthetic,
                    tuple(config.size), config.block, config.alpha, config.attention)


# --- reports ----------------------------------------------------------------


@dataclass
class StreamReport:
    stream_id: int
    score: float
    rbs: list
    symbols: int
    cells: int
    mcs: str | None = None
    mcs_flagged: bool = False
    step_index: int | None = None
    delta: float | None = None
    kept: int | None = None
    packets_sent: int = 0
    packets_failed: int = 0
    truncated: bool = False
    masked_cells: int = 0
    psnr_pre: float = 0.0
    psnr_post: float = 0.0

    @property
    def failure_rate(self) -> float:
        return self.packets_failed / self.packets_sent if self.packets_sent else 0.0


@dataclass
class TrialReport:
    scheme: str
    mode: str
    seed: int
    snr_db: float
    rate_r: float
    rate_achieved: float
    total_symbols: int
    side_info_symbols: int
    pixels: int
    psnr: float
    msssim: float
    preserved_psnr: float
    masked_cells: int
    streams: list = field(default_factory=list)
    side_info: dict = field(default_factory=dict)
    allocation_problems: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    timings: dict = field(default_factory=dict, compare=False)
    images: dict = field(default_factory=dict, compare=False, repr=False)

    def stream(self, stream_id: int) -> StreamReport:
        for s in self.streams:
            if s.stream_id == stream_id:
                return s
        raise KeyError(stream_id)

    def to_dict(self, timings: bool = False) -> dict:
        d = asdict(self)
        d.pop("images")
        if not timings:
            d.pop("timings")
        return d

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), sort_keys=True, indent=2)


# --- one trial --------------------------------------------------------------


def _side_info_tx(label_bytes: bytes, mcs: McsEntry):
    code = code_for(mcs)
    cap = payload_capacity(code.k)
    pkts = packetize(bytes_to_bits(label_bytes), SIDE_INFO_ID, cap)
    cws = code.encode(np.stack([p.to_bits(code.k) for p in pkts]))
    bits = np.concatenate([interleave(c, SIDE_INFO_SEED) for c in cws])
    return pkts, modulate(bits, mcs.order)


def _side_info_rx(y, gains, noise_var, n_packets, nbytes, mcs: McsEntry):
    code = code_for(mcs)
    llr = demodulate_llr(y, mcs.order, gains, noise_var).reshape(n_packets, code.n)
    llr = np.stack([deinterleave(v, SIDE_INFO_SEED) for v in llr])
    hard, _, _ = code.decode(llr)
    pkts = [Packet.from_bits(m) for m in code.extract(hard)]
    failed = sum(not p.crc_ok for p in pkts)
    if failed:
        return None, failed
    bits, _ = depacketize(pkts)
    return np.packbits(bits[:8 * nbytes]).tobytes(), 0


def _cell_pixels(cells_grid, block, shape):
    px = np.kron(np.asarray(cells_grid, dtype=np.uint8), np.ones((block, block), dtype=np.uint8))
    return px[:shape[0], :shape[1]].astype(bool)


def _level_shift(fmap: FeatureMap) -> float:
    # DC of a mid-grey block under the orthonormal DCT
    return 128.0 * fmap.block


def run_trial(config: ExperimentConfig, seed: int | None = None, scheme: str | None = None,
              keep_images: bool = False) -> TrialReport:
    """Run one end-to-end trial; deterministic in (config, seed)."""
    seed = config.seed if seed is None else int(seed)
    scheme = scheme or config.scheme
    if scheme not in ("modular", "integrated"):
        raise ConfigError("run_trial needs a single scheme; use config.schemes()")
    timings: dict = {}
    flags = ["kb_from_source"]

    with _stage("guidance", timings):
        src = prepare_source(config)
    fmap = src.fmap
    n_ch = fmap.channels
    grid = fmap.grid
    ss = np.random.SeedSequence([seed, 0x5C7])
    ch_ss, noise_ss = ss.spawn(2)
    noise_rng = np.random.default_rng(noise_ss)

    with _stage("channel", timings):
        budget = int(math.floor(config.rate_r * src.pixels + 1e-9))
        num_rbs = budget // config.symbols_per_rb
        if num_rbs < 1:
            raise ValueError(f"R = {config.rate_r} gives {budget} symbols, less than one RB")
        spec = ChannelSpec(num_rbs, config.symbols_per_rb, config.snr_db, config.fading,
                           int(ch_ss.generate_state(1)[0]))
        real = realize(spec)
        noise_var = real.noise_var if config.noise_var is None else config.noise_var
        nsym = config.symbols_per_rb

    selective = config.mode == "selective"
    keep = set(config.preserved_labels) if selective else {s.label for s in src.streams}
    sent = [s for s in src.streams if s.label in keep]
    if not sent:
        raise StageError("allocation", f"none of the preserved labels {sorted(keep)} has cells")
    preserved = np.isin(src.cell_labels, sorted(keep))

    side = {}
    reserved = []
    with _stage("allocation", timings):
        if selective:
            label_bytes = encode_label_map(src.labels)
            si_mcs = check_table(config.mcs_table)[0]
            si_pkts, si_sym = _side_info_tx(label_bytes, si_mcs)
            reserved = reserve_side_info(real, len(si_sym))
            side = {"bytes": len(label_bytes), "raw_bits": int(src.labels.size * 8),
                    "packets": len(si_pkts), "failed": 0, "fallback": False,
                    "rbs": list(reserved)}
        raw = np.array([s.score for s in sent])
        scores = raw / raw.sum() if raw.sum() > 0 else np.full(len(sent), 1.0 / len(sent))
        plan = allocate_rbs(scores, real, [s.label for s in sent], reserved, mode=scheme)
        if scheme == "modular":
            assign_mcs(plan, real, config.mcs_table, config.mcs_policy, config.planning_snr_db)
        problems = check_invariants(plan, real)

    rx = FeatureMap(np.zeros(fmap.coeffs.shape), fmap.block, n_ch)
    rx_cells = rx.cells
    packets, coverage = [], {}
    reports = []
    shift = _level_shift(fmap)
    for stream in sent:
        alloc = plan.stream(stream.label)
        rb_map = np.repeat(np.asarray(alloc.rbs, dtype=np.int64), nsym)
        gains = real.gains[rb_map]
        rep = StreamReport(stream.label, stream.score, list(alloc.rbs), alloc.symbols,
                           len(stream.cells))
        if scheme == "modular":
            rep.mcs, rep.mcs_flagged = alloc.mcs.name, alloc.mcs_flagged
            with _stage("modular_encode", timings):
                x = stream.payload.copy()
                x[:, :n_ch] -= shift
                tx = encode_stream(x, stream.cells, stream.label, alloc.symbols, alloc.mcs,
                                   config.delta_min)
            with _stage("channel", timings):
                y = transmit(tx.symbols, real, rb_map, rng=noise_rng, noise_var=noise_var)
            with _stage("modular_decode", timings):
                srx = decode_stream(y, gains, noise_var, tx)
            est = srx.payload
            est[:, :n_ch] += shift
            packets += srx.packets
            coverage.update(srx.coverage)
            rep.step_index, rep.delta, rep.truncated = tx.step_index, tx.delta, tx.truncated
            rep.packets_sent = tx.packets_sent
            rep.packets_failed = sum(not p.crc_ok for p in srx.packets)
            if tx.untransmitted:
                flags.append(f"untransmitted:{stream.label}")
        else:
            mu = src.kb.means[stream.label]
            centred = stream.payload - mu
            if alloc.symbols == 0:
                est = np.broadcast_to(mu, centred.shape).copy()
                flags.append(f"untransmitted:{stream.label}")
                rep.kept = 0
            else:
                with _stage("integrated_encode", timings):
                    blk = encode_analog(centred, alloc.symbols, stream.label)
                with _stage("channel", timings):
                    y = transmit(blk.symbols, real, rb_map, rng=noise_rng, noise_var=noise_var)
                with _stage("integrated_decode", timings):
                    prior = stream_priors(np.mean(centred * centred, axis=0), len(stream.cells))
                    est = decode_analog(y, blk, gains, noise_var, prior) + mu
                rep.kept = blk.kept
        rx_cells[stream.cells] = est
        reports.append(rep)
    if scheme == "integrated":
        flags.append("priors_from_source")

    synth_labels = src.cell_labels
    if selective:
        with _stage("side_info", timings):
            rb_map = np.repeat(np.asarray(reserved, dtype=np.int64), nsym)
            sym = np.zeros(len(rb_map), dtype=complex)
            sym[:len(si_sym)] = si_sym
            y = transmit(sym, real, rb_map, rng=noise_rng, noise_var=noise_var)
            data, failed = _side_info_rx(y[:len(si_sym)], real.gains[rb_map][:len(si_sym)],
                                         noise_var, len(si_pkts), len(label_bytes), si_mcs)
            side["failed"] = failed
            decoded = None
            if data is not None:
                try:
                    decoded = decode_label_map(data)
                except ValueError:
                    decoded = None
            if decoded is None or decoded.shape != src.labels.shape:
                side["fallback"] = True
                flags.append("side_info_lost")
                synth_labels = np.where(preserved, src.cell_labels, -1)
            else:
                synth_labels = np.where(preserved, src.cell_labels,
                                        dominant_labels(decoded, fmap.block))

    with _stage("synthesis", timings):
        others = sorted(set(np.unique(synth_labels[~preserved]).tolist()))
        if selective and not side.get("fallback"):
            synth = synthesize_regions(synth_labels, src.kb, others, fmap.dim)
        else:
            synth = Fragment(np.broadcast_to(src.kb.global_mean, fmap.coeffs.shape).copy(),
                             ~preserved)
        # synthesized content acts as fixed boundary for the corrector
        rx.coeffs[~preserved] = synth.coeffs[~preserved]

    with _stage("correction", timings):
        if scheme == "modular":
            mask = error_mask(packets, coverage, grid)
        else:
            mask = error_mask([], {}, grid)
        pre = rx
        post = inpaint(rx, mask, synth_labels, kb=src.kb) if config.correction and mask.count else rx

    with _stage("synthesis", timings):
        images = {}
        for name, fm in (("pre", pre), ("post", post)):
            fused = fuse(Fragment(fm.coeffs, preserved), synth, fmap.block, n_ch)
            images[name] = inverse_transform(fused, src.shape)

    with _stage("metrics", timings):
        orig = src.image
        rec = images["post"]
        pmask = _cell_pixels(preserved, fmap.block, src.shape)
        for rep, stream in zip(reports, sent):
            cg = np.zeros(grid, dtype=bool)
            cg.reshape(-1)[stream.cells] = True
            rep.masked_cells = int((mask.mask & cg).sum())
            m = _cell_pixels(cg, fmap.block, src.shape)
            rep.psnr_pre = metrics.psnr(orig, images["pre"], mask=m)
            rep.psnr_post = metrics.psnr(orig, rec, mask=m)
        report = TrialReport(
            scheme=scheme, mode=config.mode, seed=seed, snr_db=float(config.snr_db),
            rate_r=float(config.rate_r), rate_achieved=plan.total_symbols / src.pixels,
            total_symbols=plan.total_symbols, side_info_symbols=plan.side_info_symbols,
            pixels=src.pixels, psnr=metrics.psnr(orig, rec), msssim=metrics.ms_ssim(orig, rec),
            preserved_psnr=metrics.psnr(orig, rec, mask=pmask), masked_cells=mask.count,
            streams=reports, side_info=side, allocation_problems=problems, flags=flags)
    if sum(r.symbols for r in reports) + plan.side_info_symbols != plan.total_symbols:
        raise StageError("metrics", "per-stream symbols do not reconcile with the total")
    report.timings = timings
    if keep_images:
        corrected = mask.mask if config.correction else np.zeros(grid, dtype=bool)
        report.images = {
            "reconstruction": rec,
            "pre_correction": images["pre"],
            "mask": _cell_pixels(~mask.mask, fmap.block, src.shape).astype(np.uint8) * 255,
            "provenance": provenance_map(preserved, corrected, fmap.block, src.shape),
        }
    return report


def allocation_plan(config: ExperimentConfig, seed: int | None = None, scheme: str | None = None):
    """The AllocationPlan a trial would use (for ``sct inspect --plan``)."""
    seed = config.seed if seed is None else int(seed)
    scheme = scheme or config.schemes()[0]
    src = prepare_source(config)
    ch_ss, _ = np.random.SeedSequence([seed, 0x5C7]).spawn(2)
    budget = int(math.floor(config.rate_r * src.pixels + 1e-9))
    spec = ChannelSpec(max(budget // config.symbols_per_rb, 1), config.symbols_per_rb,
                       config.snr_db, config.fading, int(ch_ss.generate_state(1)[0]))
    real = realize(spec)
    keep = (set(config.preserved_labels) if config.mode == "selective"
            else {s.label for s in src.streams})
    sent = [s for s in src.streams if s.label in keep]
    reserved = []
    if config.mode == "selective":
        si_mcs = check_table(config.mcs_table)[0]
        _, si_sym = _side_info_tx(encode_label_map(src.labels), si_mcs)
        reserved = reserve_side_info(real, len(si_sym))
    raw = np.array([s.score for s in sent])
    scores = raw / raw.sum() if raw.sum() > 0 else np.full(len(sent), 1.0 / len(sent))
    plan = allocate_rbs(scores, real, [s.label for s in sent], reserved, mode=scheme)
    if scheme == "modular":
        assign_mcs(plan, real, config.mcs_table, config.mcs_policy, config.planning_snr_db)
    return plan


# --- sweeps -----------------------------------------------------------------


def parse_grid(text: str) -> list[float]:
    """``a:b:step`` (inclusive) or a single value."""
    parts = [float(p) for p in str(text).split(":")]
    if len(parts) == 1:
        return parts
    if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
        raise ConfigError(f"grid {text!r} must be a:b:step with b >= a and step > 0")
    a, b, step = parts
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 10) for i in range(n)]


def _trial_task(args):
    cfg, seed, scheme, keep = args
    try:
        rep = run_trial(cfg, seed, scheme)
    except Exception as e:  # noqa: BLE001 - failures are isolated per grid cell
        return None, f"{type(e).__name__}: {e}"
    return (rep if keep else (rep.psnr, rep.msssim)), None


@dataclass
class SweepResult:
    rows: list
    errors: list = field(default_factory=list)
    reports: list = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in self.rows:
            w.writerow([r["scheme"], f"{r['snr_db']:g}", f"{r['rate_r']:g}", r["trials"]]
                       + [f"{r[k]:.6f}" for k in SWEEP_HEADER[4:]])
        return buf.getvalue()


def _mean_std(v):
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def sweep(config: ExperimentConfig, snr_grid, r_grid, trials: int | None = None, jobs: int = 1,
          keep_reports: bool = False) -> SweepResult:
    """Aggregate trials seed..seed+T-1 for every (scheme, SNR, R) cell.

    A trial that raises is recorded in ``errors``; the cell is aggregated over
    the remaining trials (NaN when none succeeded) and the sweep continues.
    """
    snr_grid, r_grid = list(snr_grid), list(r_grid)
    if not snr_grid or not r_grid:
        raise ConfigError("sweep grids must be non-empty")
    trials = config.trials if trials is None else int(trials)
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    cells, tasks = [], []
    for scheme in config.schemes():
        for snr in snr_grid:
            for r in r_grid:
                try:
                    cfg = replace(config, snr_db=float(snr), rate_r=float(r))
                except ConfigError as e:
                    cells.append((scheme, snr, r, str(e)))
                    continue
                cells.append((scheme, snr, r, None))
                tasks += [(cfg, config.seed + t, scheme, keep_reports) for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_trial_task(t) for t in tasks]
    out = SweepResult([])
    pos = 0
    for scheme, snr, r, bad in cells:
        chunk = [] if bad else results[pos:pos + trials]
        pos += len(chunk)
        ok = []
        for t, (value, err) in enumerate(chunk):
            if err is not None:
                out.errors.append({"scheme": scheme, "snr_db": snr, "rate_r": r,
                                   "seed": config.seed + t, "error": err})
            else:
                if keep_reports:
                    out.reports.append(value)
                    value = (value.psnr, value.msssim)
                ok.append(value)
        if bad:
            out.errors.append({"scheme": scheme, "snr_db": snr, "rate_r": r, "seed": None,
                               "error": bad})
        pm, ps = _mean_std([v[0] for v in ok])
        mm, ms = _mean_std([v[1] for v in ok])
        out.rows.append({"scheme": scheme, "snr_db": float(snr), "rate_r": float(r),
                         "trials": len(ok), "psnr_mean": pm, "psnr_std": ps,
                         "msssim_mean": mm, "msssim_std": ms})
    return out
