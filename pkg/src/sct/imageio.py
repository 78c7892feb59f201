"""Netpbm / PNG images and plain-text matrices."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pnm_tokens(data: bytes, count: int):
    """Read ``count`` header tokens, skipping comments; returns (tokens, offset)."""
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    return tokens, i + 1  # exactly one whitespace byte precedes the raster


def read_pnm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), off = _pnm_tokens(data, 4)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: only binary P5/P6 netpbm files are supported")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit netpbm is not supported")
    ch = 1 if magic == b"P5" else 3
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h * ch, offset=off)
    return raster.reshape((h, w) if ch == 1 else (h, w, 3)).copy()


def write_pnm(path, img):
    img = np.asarray(img)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    magic = b"P5" if img.ndim == 2 else b"P6"
    h, w = img.shape[:2]
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + img.tobytes())


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        return read_pnm(path)
    from PIL import Image

    with Image.open(path) as im:
        im = im.convert("L") if im.mode in ("L", "P", "1", "I;16") else im.convert("RGB")
        return np.asarray(im, dtype=np.uint8).copy()


def write_image(path, img):
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        write_pnm(path, img)
        return
    from PIL import Image

    Image.fromarray(np.clip(np.rint(img), 0, 255).astype(np.uint8)).save(path)


def read_label_map(path) -> np.ndarray:
    lab = read_image(path)
    if lab.ndim != 2:
        raise ValueError(f"{path}: label maps must be single-channel")
    return lab.astype(np.int64)


def read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)


def write_matrix(path, m):
    np.savetxt(path, np.atleast_2d(m), fmt="%.10g")
