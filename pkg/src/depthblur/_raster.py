"""Low-level raster helpers shared by the blur, layering, and fitting code.

All convolutions here are direct tap-accumulation loops over the kernel
(kernels have at most a few dozen occupied taps), with accumulation in
float64 and a fixed tap order so results are deterministic regardless of
thread count.
"""
from __future__ import annotations

import numpy as np

PAD_MODES = ("replicate", "zero")


def round_half_away(x):
    """Round to the nearest integer with ties away from zero.

    This is the rounding convention used everywhere displacements are
    discretized; it keeps kernels of symmetric trajectories symmetric
    (np.round would tie to even instead).
    """
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def _pad_widths(shape_k, anchor):
    hk, wk = shape_k
    ax, ay = anchor
    return (hk - 1 - ay, ay), (wk - 1 - ax, ax)


def pad_borders(img, top, bottom, left, right, mode="replicate"):
    if mode not in PAD_MODES:
        raise ValueError(f"unknown padding mode {mode!r}")
    widths = ((top, bottom), (left, right)) + ((0, 0),) * (img.ndim - 2)
    np_mode = "edge" if mode == "replicate" else "constant"
    return np.pad(img, widths, mode=np_mode)


def pad_borders_adjoint(padded, top, bottom, left, right, mode="replicate"):
    """Adjoint of :func:`pad_borders` (folds padded-border mass back inside).

    For replicate padding every padded row/column was copied from the
    nearest edge row/column, so the adjoint sums it back there; zero
    padding simply crops.
    """
    h = padded.shape[0] - top - bottom
    w = padded.shape[1] - left - right
    out = padded[top:top + h].copy()
    if mode == "replicate":
        if top:
            out[0] += padded[:top].sum(axis=0)
        if bottom:
            out[-1] += padded[top + h:].sum(axis=0)
    out2 = out[:, left:left + w].copy()
    if mode == "replicate":
        if left:
            out2[:, 0] += out[:, :left].sum(axis=1)
        if right:
            out2[:, -1] += out[:, left + w:].sum(axis=1)
    return out2


def convolve_taps(img, weights, anchor, mode="replicate"):
    """True convolution of ``img`` with an anchored kernel, same-size output.

    ``y[p] = sum_u w(u) * img[p - u]`` where ``u`` runs over tap offsets
    relative to ``anchor`` (given as ``(ax, ay)`` column/row indices of the
    zero-offset tap). Accepts (H, W) or (H, W, C) arrays.
    """
    img = np.asarray(img, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    hk, wk = weights.shape
    (top, bottom), (left, right) = _pad_widths((hk, wk), anchor)
    padded = pad_borders(img, top, bottom, left, right, mode)
    h, w = img.shape[:2]
    out = np.zeros_like(img)
    for r, c in np.argwhere(weights != 0.0):
        out += weights[r, c] * padded[hk - 1 - r:hk - 1 - r + h,
                                      wk - 1 - c:wk - 1 - c + w]
    return out


def convolve_taps_adjoint(z, weights, anchor, mode="replicate"):
    """Adjoint of :func:`convolve_taps` under the same padding mode."""
    z = np.asarray(z, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    hk, wk = weights.shape
    (top, bottom), (left, right) = _pad_widths((hk, wk), anchor)
    h, w = z.shape[:2]
    padded_shape = (h + top + bottom, w + left + right) + z.shape[2:]
    acc = np.zeros(padded_shape, dtype=np.float64)
    for r, c in np.argwhere(weights != 0.0):
        acc[hk - 1 - r:hk - 1 - r + h, wk - 1 - c:wk - 1 - c + w] += weights[r, c] * z
    return pad_borders_adjoint(acc, top, bottom, left, right, mode)


def gaussian_window(size, sigma):
    """Discrete 1D Gaussian window of odd ``size``, renormalized to sum 1."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"window size must be odd and positive, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def smooth_separable(img, window_x, window_y, mode="replicate"):
    """Convolve with the outer product ``window_y ⊗ window_x`` (two 1D passes)."""
    wx = np.asarray(window_x, dtype=np.float64).reshape(1, -1)
    wy = np.asarray(window_y, dtype=np.float64).reshape(-1, 1)
    out = convolve_taps(img, wx, ((wx.size - 1) // 2, 0), mode)
    return convolve_taps(out, wy, (0, (wy.size - 1) // 2), mode)
