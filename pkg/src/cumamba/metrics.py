"""PSNR and SSIM for float images in [0, 1], RGB or single channel."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / MSE) with MAX = 1; identical images report +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _window_mean(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Separable Gaussian-weighted local mean, valid region only."""
    size = w.size
    t = sliding_window_view(img, size, axis=0) @ w
    return sliding_window_view(t, size, axis=1) @ w


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity over an 11x11 Gaussian window (sigma 1.5).

    Stabilizers use data range 1: C1 = k1^2, C2 = k2^2. Accepts (H, W) or
    (H, W, C); channels are averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    h, wdt = a.shape[:2]
    if h < window or wdt < window:
        raise ValueError(f"image {h}x{wdt} smaller than the {window}x{window} window")
    c1 = k1 * k1
    c2 = k2 * k2
    w = gaussian_window(window, sigma)
    vals = []
    for c in range(a.shape[2]):
        x, y = a[:, :, c], b[:, :, c]
        mu_x = _window_mean(x, w)
        mu_y = _window_mean(y, w)
        var_x = _window_mean(x * x, w) - mu_x * mu_x
        var_y = _window_mean(y * y, w) - mu_y * mu_y
        cov = _window_mean(x * y, w) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))
