"""Receiver-side synthesis: inverse transform, label-map side information,
knowledge-base region synthesis and fusion of preserved/synthesized cells."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .guidance import FeatureMap, inverse_blocks
from .modular.rangecoder import AdaptiveModel, RangeDecoder, RangeEncoder

PRESERVED, CORRECTED, SYNTHESIZED = 0, 128, 255


@dataclass
class KnowledgeBase:
    """Per-label mean embeddings shared by both ends."""

    means: dict[int, np.ndarray]
    global_mean: np.ndarray
    colors: dict[int, float] = field(default_factory=dict)

    @classmethod
    def from_feature_map(cls, fmap: FeatureMap, cell_labels) -> "KnowledgeBase":
        lab = np.asarray(cell_labels).ravel()
        cells = fmap.cells
        means = {int(l): cells[lab == l].mean(axis=0) for l in np.unique(lab)}
        b = fmap.block
        colors = {l: float(m[0] / b) for l, m in means.items()}
        return cls(means, cells.mean(axis=0), colors)

    def lookup(self, label: int):
        """(embedding, flagged); flagged when the label falls back to the global mean."""
        if label in self.means:
            return self.means[label], False
        return self.global_mean, True


def inverse_transform(fmap: FeatureMap, shape=None) -> np.ndarray:
    img = inverse_blocks(fmap)
    if shape is not None:
        img = img[:shape[0], :shape[1]]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# --- label map side information ---------------------------------------------

_RUN_CLASSES = 40


def _encode_uint(enc, model, v):
    # class = bit length, then the bits below the leading one
    nb = int(v).bit_length()
    enc.encode_symbol(model, nb)
    rest, left = v - (1 << (nb - 1)) if nb else 0, max(nb - 1, 0)
    while left > 0:
        take = min(left, 16)
        left -= take
        enc.encode_bits((rest >> left) & ((1 << take) - 1), take)


def _decode_uint(dec, model):
    nb = dec.decode_symbol(model)
    if nb == 0:
        return 0
    v, left = 0, nb - 1
    while left > 0:
        take = min(left, 16)
        left -= take
        v = (v << take) | dec.decode_bits(take)
    return (1 << (nb - 1)) + v


def _flush_short(enc: RangeEncoder) -> bytes:
    """Shortest tail that a zero-padding decoder still resolves."""
    low, rng = enc.low, enc.range
    for nbytes in range(1, 5):
        unit = 1 << (32 - 8 * nbytes)
        v = -(-low // unit) * unit
        if v < low + rng and v < (1 << 32):
            tail = v.to_bytes(4, "big")[:nbytes]
            return bytes(enc.out) + tail
    return enc.finish()


def _row_runs(row):
    change = np.flatnonzero(row[1:] != row[:-1]) + 1
    starts = np.r_[0, change]
    return row[starts].tolist(), np.diff(np.r_[starts, row.size]).tolist()


def encode_label_map(labels) -> bytes:
    """Range-coded row-major runs of (label, length).

    Each row is preceded by a binary flag saying whether it repeats the row
    above, in which case its runs are skipped.  Ids must be < 256.
    """
    lab = np.asarray(labels)
    if lab.ndim != 2 or lab.size == 0 or lab.min() < 0 or lab.max() > 255:
        raise ValueError("label maps must be non-empty, 2-D with ids in [0, 255]")
    h, w = lab.shape
    enc = RangeEncoder()
    size_model = AdaptiveModel(_RUN_CLASSES)
    repeat_model = AdaptiveModel(2)
    id_model = AdaptiveModel(256)
    run_model = AdaptiveModel(_RUN_CLASSES)
    _encode_uint(enc, size_model, h)
    _encode_uint(enc, size_model, w)
    for y in range(h):
        same = y > 0 and np.array_equal(lab[y], lab[y - 1])
        if y > 0:
            enc.encode_symbol(repeat_model, int(same))
        if same:
            continue
        for lid, run in zip(*_row_runs(lab[y])):
            enc.encode_symbol(id_model, int(lid))
            _encode_uint(enc, run_model, run)
    return _flush_short(enc)


def decode_label_map(data: bytes) -> np.ndarray:
    dec = RangeDecoder(bytes(data), strict=False)
    size_model = AdaptiveModel(_RUN_CLASSES)
    repeat_model = AdaptiveModel(2)
    id_model = AdaptiveModel(256)
    run_model = AdaptiveModel(_RUN_CLASSES)
    h = _decode_uint(dec, size_model)
    w = _decode_uint(dec, size_model)
    if h <= 0 or w <= 0 or h * w > 1 << 26:
        raise ValueError("corrupted label map header")
    out = np.empty((h, w), dtype=np.int64)
    for y in range(h):
        if y > 0 and dec.decode_symbol(repeat_model):
            out[y] = out[y - 1]
            continue
        pos = 0
        while pos < w:
            lid = dec.decode_symbol(id_model)
            run = _decode_uint(dec, run_model)
            if run <= 0 or pos + run > w:
                raise ValueError("corrupted label map run")
            out[y, pos:pos + run] = lid
            pos += run
    return out


# --- synthesis and fusion -----------------------------------------------------


@dataclass
class Fragment:
    """Feature values on a subset of cells (``cells`` is a boolean grid)."""

    coeffs: np.ndarray
    cells: np.ndarray
    flagged_labels: list = field(default_factory=list)


def synthesize_regions(cell_labels, kb: KnowledgeBase, region_labels, dim: int) -> Fragment:
    lab = np.asarray(cell_labels)
    coeffs = np.zeros(lab.shape + (dim,))
    cells = np.isin(lab, list(region_labels)) if len(region_labels) else np.zeros(lab.shape, bool)
    flagged = []
    for lid in np.unique(lab[cells]):
        vec, miss = kb.lookup(int(lid))
        coeffs[lab == lid] = vec
        if miss:
            flagged.append(int(lid))
    return Fragment(coeffs, cells, flagged)


def fuse(preserved: Fragment, synthesized: Fragment, block: int, channels: int) -> FeatureMap:
    """Union of both fragments with one pass of DC seam smoothing.

    Synthesized cells touching a preserved cell (8-neighbourhood) get the DC
    average of their 3x3 neighbourhood; preserved cells are never modified.
    """
    p, s = np.asarray(preserved.cells, bool), np.asarray(synthesized.cells, bool)
    if np.any(p & s):
        raise ValueError("fragments overlap")
    if not np.all(p | s):
        raise ValueError("fragments leave cells uncovered")
    v = np.where(p[..., None], preserved.coeffs, synthesized.coeffs)
    if p.any() and s.any():
        h, w = p.shape
        pp = np.pad(p, 1)
        touch = np.zeros_like(p)
        for dy in range(3):
            for dx in range(3):
                touch |= pp[dy:dy + h, dx:dx + w]
        seam = s & touch
        dc = v[..., :channels]
        padded = np.pad(dc, ((1, 1), (1, 1), (0, 0)))
        ones = np.pad(np.ones((h, w)), 1)
        acc = sum(padded[dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3))
        cnt = sum(ones[dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3))
        smooth = acc / cnt[..., None]
        v[seam, :channels] = smooth[seam]
    return FeatureMap(v, block, channels)


def provenance_map(preserved_cells, corrected_cells, block: int, shape=None) -> np.ndarray:
    """Per-pixel provenance: 0 preserved, 128 corrected, 255 synthesized."""
    p = np.asarray(preserved_cells, bool)
    c = np.asarray(corrected_cells, bool) & p
    grid = np.where(c, CORRECTED, np.where(p, PRESERVED, SYNTHESIZED)).astype(np.uint8)
    px = np.kron(grid, np.ones((block, block), dtype=np.uint8))
    if shape is not None:
        px = px[:shape[0], :shape[1]]
    return px
