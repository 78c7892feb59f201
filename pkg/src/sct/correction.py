"""Receiver-side distortion correction.

Cells whose packets failed the CRC (or never arrived) are marked in an error
mask and restored by harmonic interpolation: every embedding channel solves
the discrete Laplace equation over the masked cells with intact cells as
Dirichlet boundary, averaging only over four-neighbours that share the
cell's label whenever such a neighbour exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .guidance import FeatureMap

TOLERANCE = 1e-6
MAX_ITER = 500


@dataclass
class ErrorMask:
    mask: np.ndarray                    # (grid_h, grid_w) bool, True = corrupted
    packets: list = field(default_factory=list)  # (stream id, seq) of failed packets

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def to_pgm_array(self) -> np.ndarray:
        # corrupted cells drawn black
        return np.where(self.mask, 0, 255).astype(np.uint8)


def error_mask(packets, coverage, grid) -> ErrorMask:
    """Mark every cell covered by a failed or missing packet.

    ``coverage`` maps (stream id, seq) to the flat cell indices that packet
    carries; ``packets`` are the received packets (objects with ``stream_id``,
    ``seq`` and ``crc_ok``).
    """
    mask = np.zeros(grid, dtype=bool)
    flat = mask.reshape(-1)
    ok = {(p.stream_id, p.seq) for p in packets if p.crc_ok}
    failed = []
    for key, cells in coverage.items():
        if key not in ok:
            flat[np.asarray(cells, dtype=np.int64)] = True
            failed.append(key)
    return ErrorMask(mask, sorted(failed))


def _shift(a, dy, dx):
    """Value of the neighbour at (y+dy, x+dx); zero outside the grid."""
    out = np.zeros_like(a)
    h, w = a.shape[:2]
    ys = slice(max(dy, 0), h + min(dy, 0))
    yd = slice(max(-dy, 0), h + min(-dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    xd = slice(max(-dx, 0), w + min(-dx, 0))
    out[yd, xd] = a[ys, xs]
    return out


_DIRS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def neighbour_weights(labels, mask):
    """Per-direction 0/1 weights selecting which neighbours a masked cell averages.

    Same-label neighbours are used when at least one exists; otherwise all
    grid neighbours.  A label region with no intact cell at all is treated
    as unconstrained, so information can flow in from adjacent regions.
    """
    labels = np.asarray(labels)
    h, w = labels.shape
    inside = [_shift(np.ones((h, w)), dy, dx) > 0 for dy, dx in _DIRS]
    same = [ins & (_shift(labels + 0, dy, dx) == labels) for ins, (dy, dx) in zip(inside, _DIRS)]
    has_same = np.any(same, axis=0)
    orphan = np.zeros((h, w), dtype=bool)
    for lid in np.unique(labels):
        region = labels == lid
        if np.all(mask[region]):
            orphan |= region
    use_same = has_same & ~orphan
    return [np.where(use_same, s, ins).astype(np.float64) for s, ins in zip(same, inside)], orphan


def inpaint(fmap: FeatureMap, mask, cell_labels, kb=None, tol: float = TOLERANCE,
            max_iter: int = MAX_ITER, return_info: bool = False):
    """Restore masked cells; intact cells are returned bit-identical."""
    m = np.asarray(mask.mask if isinstance(mask, ErrorMask) else mask, dtype=bool)
    labels = np.asarray(cell_labels)
    if m.shape != fmap.grid or labels.shape != fmap.grid:
        raise ValueError("mask and label grid must match the feature map")
    out = fmap.copy()
    info = {"iterations": 0, "orphan_cells": 0, "max_update": 0.0}
    if not m.any():
        return (out, info) if return_info else out
    v = out.coeffs
    if m.all():
        for lid in np.unique(labels):
            region = labels == lid
            v[region] = _kb_vector(kb, lid, fmap.dim)
        info["orphan_cells"] = int(m.sum())
        return (out, info) if return_info else out

    # start from the per-label mean of intact cells, else the global intact mean
    intact_mean = v[~m].mean(axis=0)
    for lid in np.unique(labels[m]):
        region = labels == lid
        good = region & ~m
        start = v[good].mean(axis=0) if good.any() else _kb_vector(kb, lid, fmap.dim, intact_mean)
        v[region & m] = start

    weights, orphan = neighbour_weights(labels, m)
    wsum = sum(weights)
    wsum = np.where(wsum > 0, wsum, 1.0)
    ys, xs = np.nonzero(m)
    it = 0
    for it in range(1, max_iter + 1):
        acc = np.zeros_like(v)
        for wd, (dy, dx) in zip(weights, _DIRS):
            acc += wd[..., None] * _shift(v, dy, dx)
        new = acc[ys, xs] / wsum[ys, xs, None]
        delta = float(np.max(np.abs(new - v[ys, xs])))
        v[ys, xs] = new
        if delta < tol:
            break
    info.update(iterations=it, max_update=delta, orphan_cells=int((orphan & m).sum()))

    if kb is not None:
        dc = fmap.dc_index
        for lid in np.unique(labels[orphan & m]):
            cells = (labels == lid) & m
            ref = _kb_vector(kb, lid, fmap.dim)
            sel = v[cells]
            sel[:, dc] = 0.5 * sel[:, dc] + 0.5 * ref[dc]
            v[cells] = sel
    return (out, info) if return_info else out


def _kb_vector(kb, label, dim, default=None):
    if kb is not None:
        vec, _ = kb.lookup(label)
        return vec
    return np.zeros(dim) if default is None else default
