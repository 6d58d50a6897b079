"""Depth-layer decomposition: regions, extended soft masks, z-buffers, mattes.

A depth map plus a band-edge sequence yields per-layer regions; each region
is dilated and smoothed into a soft mask sized to its paired blur kernel,
visibility is resolved far-to-near with z-buffers, and the normalized
products become the alpha mattes that blend per-layer convolutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation

from ._raster import gaussian_window, smooth_separable
from .geometry import DepthSequence

__all__ = [
    "DepthMap",
    "LayerDecomposition",
    "assign_regions",
    "extend_region",
    "z_buffers",
    "alpha_mattes",
    "optimal_layer_depths",
    "decompose",
]

MATTE_EPS = 1e-12


@dataclass(frozen=True)
class DepthMap:
    """Single-channel metric depth raster; positive, finite, float32."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float32)
        if vals.ndim != 2:
            raise ValueError("depth map must be 2D")
        bad = int(np.count_nonzero(~np.isfinite(vals) | (vals <= 0)))
        if bad:
            raise ValueError(f"depth map has {bad} non-positive or non-finite pixels")
        object.__setattr__(self, "values", vals)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def _depth_values(depth) -> np.ndarray:
    return depth.values if isinstance(depth, DepthMap) else np.asarray(depth)


def assign_regions(depth, seq: DepthSequence) -> np.ndarray:
    """Label each pixel with its depth band index.

    Layer 0 is the far band [D_0, inf); layer l >= 1 covers [D_l, D_{l-1}),
    so a depth exactly equal to a band edge D_l belongs to layer l. Depths
    below the last edge clamp to the nearest layer L-1 (depth-noise
    outliers; the sequence construction covers the scene minimum).
    """
    vals = _depth_values(depth).astype(np.float64)
    edges = np.asarray(seq.values, dtype=np.float64)
    ascending = edges[::-1]
    labels = len(edges) - np.searchsorted(ascending, vals, side="right")
    return np.minimum(labels, len(edges) - 1).astype(np.int32)


def extend_region(mask, support: tuple[int, int], sigma: float) -> np.ndarray:
    """Dilate a binary region by a rectangle and smooth with a Gaussian window.

    ``support`` is the paired kernel's (width, height) window; both must be
    odd. The smoothing window has the same size and is renormalized after
    truncation, so an all-ones mask stays all ones.
    """
    sx, sy = support
    if sx < 1 or sy < 1 or sx % 2 == 0 or sy % 2 == 0:
        raise ValueError(f"support must be odd in both axes, got {support}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    mask = np.asarray(mask, dtype=bool)
    if sx > 1 or sy > 1:
        dilated = binary_dilation(mask, structure=np.ones((sy, sx), dtype=bool))
    else:
        dilated = mask
    soft = smooth_separable(dilated.astype(np.float64),
                            gaussian_window(sx, sigma), gaussian_window(sy, sigma))
    return np.clip(soft, 0.0, 1.0).astype(np.float32)


def z_buffers(extended_masks) -> list[np.ndarray]:
    """Per-layer visibility: product of complements of all nearer layers.

    Layer order is far to near; the nearest layer sees the empty product 1.
    """
    count = len(extended_masks)
    acc = np.ones_like(np.asarray(extended_masks[0], dtype=np.float64))
    out: list[np.ndarray] = [None] * count
    for l in range(count - 1, -1, -1):
        out[l] = acc.astype(np.float32)
        acc = acc * (1.0 - np.asarray(extended_masks[l], dtype=np.float64))
    return out


def alpha_mattes(extended_masks, zbuffers) -> list[np.ndarray]:
    """Normalized blending weights ``R_l * M_l / C``; they sum to 1 per pixel.

    The normalizer is positive everywhere (the nearest contributing layer
    has z-buffer 1 and a positive mask), but the division is guarded anyway.
    """
    contrib = [np.asarray(r, dtype=np.float64) * np.asarray(m, dtype=np.float64)
               for r, m in zip(extended_masks, zbuffers)]
    norm = np.maximum(sum(contrib), MATTE_EPS)
    return [(c / norm).astype(np.float32) for c in contrib]


def optimal_layer_depths(depth, labels, seq: DepthSequence) -> list[float]:
    """Mean scene depth per layer, the MSE-optimal single depth of the band.

    An empty band falls back to its midpoint (layer 0: the band edge
    itself, which for a static sequence is the infinite sentinel).
    """
    vals = _depth_values(depth).astype(np.float64)
    labels = np.asarray(labels)
    out = []
    for l in range(len(seq)):
        selected = vals[labels == l]
        if selected.size:
            out.append(float(selected.mean()))
        elif l == 0:
            out.append(seq.values[0])
        else:
            lower, upper = seq.band(l)
            out.append((lower + upper) / 2.0)
    return out


@dataclass(frozen=True)
class LayerDecomposition:
    """All per-layer rasters needed by the compositing forward model."""

    sequence: DepthSequence
    labels: np.ndarray
    extended_masks: list[np.ndarray]
    zbuffers: list[np.ndarray]
    mattes: list[np.ndarray]
    optimal_depths: list[float]

    def __post_init__(self):
        counts = {len(self.extended_masks), len(self.zbuffers), len(self.mattes),
                  len(self.optimal_depths), len(self.sequence)}
        if len(counts) != 1:
            raise ValueError("per-layer collections disagree on layer count")

    @property
    def layer_count(self) -> int:
        return len(self.sequence)


def decompose(depth, seq: DepthSequence, supports, sigma: float) -> LayerDecomposition:
    """Full decomposition given the per-layer mask-extension supports.

    ``supports`` holds one odd (width, height) pair per layer, normally the
    symmetric support of the layer's blur kernel.
    """
    if len(supports) != len(seq):
        raise ValueError("need one support per layer")
    labels = assign_regions(depth, seq)
    masks = [extend_region(labels == l, supports[l], sigma) for l in range(len(seq))]
    zbuf = z_buffers(masks)
    mattes = alpha_mattes(masks, zbuf)
    depths = optimal_layer_depths(depth, labels, seq)
    return LayerDecomposition(seq, labels, masks, zbuf, mattes, depths)
