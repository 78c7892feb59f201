"""Image quality metrics: PSNR and multi-scale SSIM."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

PSNR_CAP = 99.0
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
K1, K2 = 0.01, 0.03
SIGMA = 1.5
WINDOW = 11


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 255.0, mask=None) -> float:
    a, b = _pair(a, b)
    d = (a - b) ** 2
    if mask is not None:
        m = np.asarray(mask, bool)
        d = d[m] if d.ndim == m.ndim else d[m, ...]
    mse = float(np.mean(d))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(peak * peak / mse))


def _ssim_terms(x, y, peak):
    c1, c2 = (K1 * peak) ** 2, (K2 * peak) ** 2
    # 11-tap Gaussian: radius 5 at sigma 1.5; borders reflected so any size works
    f = lambda z: gaussian_filter(z, SIGMA, truncate=(WINDOW // 2) / SIGMA, mode="reflect")
    mx, my = f(x), f(y)
    sxx = f(x * x) - mx * mx
    syy = f(y * y) - my * my
    sxy = f(x * y) - mx * my
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def ms_ssim(a, b, peak: float = 255.0) -> float:
    """Five-scale MS-SSIM on luma; contrast terms are clipped at zero."""
    a, b = _pair(a, b)
    if a.ndim == 3:
        w = np.array([0.299, 0.587, 0.114])
        a, b = a @ w, b @ w
    if np.array_equal(a, b):
        return 1.0
    vals = []
    x, y = a, b
    for scale, weight in enumerate(MSSSIM_WEIGHTS):
        ssim, cs = _ssim_terms(x, y, peak)
        last = scale == len(MSSSIM_WEIGHTS) - 1
        vals.append(max(ssim if last else cs, 0.0) ** weight)
        if not last:
            x, y = _down(x), _down(y)
    return float(np.clip(np.prod(vals), 0.0, 1.0))


def _down(z):
    h, w = z.shape
    if h < 2 or w < 2:
        return z
    z = z[: h - h % 2, : w - w % 2]
    return z.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
