"""Image quality metrics: PSNR and Gaussian-windowed SSIM."""
from __future__ import annotations

import numpy as np

from ._raster import gaussian_window

__all__ = ["psnr", "ssim", "PSNR_CAP_DB"]

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _values(img) -> np.ndarray:
    vals = np.asarray(getattr(img, "values", img), dtype=np.float64)
    if vals.ndim == 2:
        vals = vals[:, :, None]
    return vals


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for peak 1.0, capped at 99 dB."""
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch {va.shape} vs {vb.shape}")
    mse = float(np.mean((va - vb) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / mse)))


def _valid_windowed_mean(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Valid-mode correlation of a 2D array with a separable window."""
    r = (window.size - 1) // 2
    h, w = img.shape
    rows = np.zeros((h, w - 2 * r), dtype=np.float64)
    for k in range(window.size):
        rows += window[k] * img[:, k:k + w - 2 * r]
    out = np.zeros((h - 2 * r, w - 2 * r), dtype=np.float64)
    for k in range(window.size):
        out += window[k] * rows[k:k + h - 2 * r, :]
    return out


def ssim(a, b) -> float:
    """Mean structural similarity over 11x11 Gaussian windows (sigma 1.5).

    Local statistics use population normalization; the index map is
    restricted to windows fully inside the image and averaged per channel.
    """
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch {va.shape} vs {vb.shape}")
    if min(va.shape[0], va.shape[1]) < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    window = gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    scores = []
    for ch in range(va.shape[2]):
        x, y = va[:, :, ch], vb[:, :, ch]
        mu_x = _valid_windowed_mean(x, window)
        mu_y = _valid_windowed_mean(y, window)
        var_x = _valid_windowed_mean(x * x, window) - mu_x ** 2
        var_y = _valid_windowed_mean(y * y, window) - mu_y ** 2
        cov = _valid_windowed_mean(x * y, window) - mu_x * mu_y
        index = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / \
                ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2))
        scores.append(index.mean())
    return float(np.mean(scores))
