"""Semantic guidance: feature map, semantic streams and importance scores.

The analysis transform is an orthonormal B x B block DCT.  Each feature-map
cell holds one block's coefficients in zigzag order; for colour images the
channels are interleaved per zigzag position, so position 0..channels-1 are
the DC terms.  Externally computed feature maps or scalar maps can be used
in place of the built-in ones as long as they sit on the same grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

DEFAULT_BLOCK = 8
DEFAULT_ALPHA = 0.5


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    d[0] /= np.sqrt(2.0)
    d.setflags(write=False)
    return d


@lru_cache(maxsize=None)
def zigzag(n: int) -> np.ndarray:
    """Flat (row-major) indices of an n x n block in JPEG zigzag order."""
    order = sorted(((r, c) for r in range(n) for c in range(n)),
                   key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]))
    z = np.array([r * n + c for r, c in order])
    z.setflags(write=False)
    return z


@dataclass
class FeatureMap:
    """coeffs has shape (grid_h, grid_w, C)."""

    coeffs: np.ndarray
    block: int = DEFAULT_BLOCK
    channels: int = 1

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 3 or c.shape[2] != self.channels * self.block ** 2:
            raise ValueError("feature map shape does not match block size and channels")
        if not np.all(np.isfinite(c)):
            raise ValueError("feature map contains non-finite values")
        self.coeffs = c

    @property
    def grid(self) -> tuple[int, int]:
        return self.coeffs.shape[:2]

    @property
    def dim(self) -> int:
        return self.coeffs.shape[2]

    @property
    def cells(self) -> np.ndarray:
        """(num_cells, C) view, cells in raster order."""
        return self.coeffs.reshape(-1, self.dim)

    @property
    def dc_index(self) -> np.ndarray:
        return np.arange(self.channels)

    def copy(self) -> "FeatureMap":
        return FeatureMap(self.coeffs.copy(), self.block, self.channels)


def pad_image(img, block: int = DEFAULT_BLOCK):
    """Edge-replicate to a multiple of the block size; returns (padded, original shape)."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    ph, pw = -h % block, -w % block
    if ph == 0 and pw == 0:
        return img, (h, w)
    pad = ((0, ph), (0, pw)) + ((0, 0),) * (img.ndim - 2)
    return np.pad(img, pad, mode="edge"), (h, w)


def _check_image(img, block):
    img = np.asarray(img)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ValueError("images must be HxW (luma) or HxWx3")
    h, w = img.shape[:2]
    if h % block or w % block:
        raise ValueError(f"image {w}x{h} is not a multiple of the block size {block}")
    if np.any(img < 0) or np.any(img > 255):
        raise ValueError("samples must lie in [0, 255]")
    return img


def forward_transform(image, block: int = DEFAULT_BLOCK) -> FeatureMap:
    img = _check_image(image, block).astype(np.float64)
    if img.ndim == 2:
        img = img[..., None]
    h, w, ch = img.shape
    gh, gw = h // block, w // block
    d = dct_matrix(block)
    blocks = img.reshape(gh, block, gw, block, ch).transpose(0, 2, 4, 1, 3)
    coef = d @ blocks @ d.T  # (gh, gw, ch, B, B)
    coef = coef.reshape(gh, gw, ch, block * block)[..., zigzag(block)]
    # interleave channels per zigzag position
    coef = coef.transpose(0, 1, 3, 2).reshape(gh, gw, ch * block * block)
    return FeatureMap(coef, block, ch)


def inverse_blocks(fmap: FeatureMap) -> np.ndarray:
    """Real-valued inverse DCT (no rounding or clamping)."""
    b, ch = fmap.block, fmap.channels
    gh, gw = fmap.grid
    coef = fmap.coeffs.reshape(gh, gw, b * b, ch).transpose(0, 1, 3, 2)
    flat = np.empty_like(coef)
    flat[..., zigzag(b)] = coef
    d = dct_matrix(b)
    pix = d.T @ flat.reshape(gh, gw, ch, b, b) @ d
    img = pix.transpose(0, 3, 1, 4, 2).reshape(gh * b, gw * b, ch)
    return img[..., 0] if ch == 1 else img


def luma(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img @ np.array([0.299, 0.587, 0.114])


# --- labels and streams -----------------------------------------------------


def dominant_labels(labels, block: int = DEFAULT_BLOCK) -> np.ndarray:
    """Per-cell majority label, ties going to the lowest label id."""
    lab = np.asarray(labels, dtype=np.int64)
    h, w = lab.shape
    if h % block or w % block:
        raise ValueError("label map is not a multiple of the block size")
    gh, gw = h // block, w // block
    ids, inv = np.unique(lab, return_inverse=True)
    cells = inv.reshape(gh, block, gw, block).transpose(0, 2, 1, 3).reshape(gh * gw, -1)
    counts = np.zeros((gh * gw, len(ids)), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(gh * gw), block * block), cells.ravel()), 1)
    return ids[np.argmax(counts, axis=1)].reshape(gh, gw)


def grid_labels(height: int, width: int, rows: int, cols: int) -> np.ndarray:
    """Synthetic segmentation: a rows x cols grid of rectangular regions."""
    r = np.minimum(np.arange(height) * rows // height, rows - 1)
    c = np.minimum(np.arange(width) * cols // width, cols - 1)
    return (r[:, None] * cols + c[None, :]).astype(np.int64)


@dataclass
class SemanticStream:
    label: int
    cells: np.ndarray            # flat cell indices, raster order
    score: float = 0.0
    payload: np.ndarray | None = field(default=None, repr=False)


def segment_streams(fmap: FeatureMap, labels, with_diagnostics: bool = False):
    lab = np.asarray(labels)
    gh, gw = fmap.grid
    if lab.shape != (gh * fmap.block, gw * fmap.block):
        raise ValueError(f"label map {lab.shape} does not match feature grid {fmap.grid} "
                         f"at block size {fmap.block}")
    dom = dominant_labels(lab, fmap.block).ravel()
    streams = []
    for lid in np.unique(dom):
        cells = np.flatnonzero(dom == lid)
        streams.append(SemanticStream(int(lid), cells, payload=fmap.cells[cells].copy()))
    if not with_diagnostics:
        return streams
    present = set(np.unique(lab).tolist())
    dominant = set(np.unique(dom).tolist())
    return streams, {"labels_without_cells": sorted(present - dominant)}


# --- importance -------------------------------------------------------------


@dataclass
class ScalarMap:
    values: np.ndarray
    role: str = "importance"

    @property
    def grid(self):
        return self.values.shape


def minmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi - lo <= 0:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def entropy_bits(fmap: FeatureMap) -> np.ndarray:
    """Un-normalised Gaussian entropy proxy of each cell's AC coefficients."""
    ac = fmap.coeffs[..., fmap.channels:]
    var = ac.var(axis=-1)
    with np.errstate(divide="ignore"):
        h = 0.5 * np.log2(2 * np.pi * np.e * var)
    return np.maximum(h, 0.0)


def entropy_map(fmap: FeatureMap) -> ScalarMap:
    return ScalarMap(minmax(entropy_bits(fmap)), "entropy")


def saliency_map(image, block: int = DEFAULT_BLOCK) -> ScalarMap:
    """Centre-surround contrast of cell means plus in-cell luma deviation."""
    y = luma(_check_image(image, block))
    h, w = y.shape
    gh, gw = h // block, w // block
    cells = y.reshape(gh, block, gw, block).transpose(0, 2, 1, 3).reshape(gh, gw, -1)
    mu = cells.mean(axis=-1)
    sd = cells.std(axis=-1)
    p = np.pad(mu, 1)
    n = np.pad(np.ones_like(mu), 1)
    s = sum(p[i:i + gh, j:j + gw] for i in range(3) for j in range(3))
    cnt = sum(n[i:i + gh, j:j + gw] for i in range(3) for j in range(3))
    return ScalarMap(minmax(np.abs(mu - s / cnt) + sd), "saliency")


def importance_map(entropy: ScalarMap, attention: ScalarMap,
                   alpha: float = DEFAULT_ALPHA) -> ScalarMap:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    e, a = np.asarray(entropy.values), np.asarray(attention.values)
    if e.shape != a.shape:
        raise ValueError(f"grid mismatch: entropy {e.shape} vs attention {a.shape}")
    return ScalarMap(alpha * e + (1.0 - alpha) * a, "importance")


def score_streams(streams: list[SemanticStream], imap: ScalarMap) -> list[SemanticStream]:
    """Sum importance over each stream's cells and normalise to a probability vector."""
    flat = np.asarray(imap.values, dtype=np.float64).ravel()
    raw = np.array([flat[s.cells].sum() for s in streams])
    total = raw.sum()
    scores = raw / total if total > 0 else np.full(len(streams), 1.0 / max(len(streams), 1))
    for s, v in zip(streams, scores):
        s.score = float(v)
    return streams
