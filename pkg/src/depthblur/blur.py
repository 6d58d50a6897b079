"""Forward blur synthesis: compositing model, pixel-wise baseline, pipeline.

The compositing path blends a handful of per-layer convolutions with alpha
mattes; the pixel-wise path averages per-sample gathers, which evaluates
the per-pixel EPDF kernels without ever materializing them. Both share the
edge-replication border policy and float64 accumulation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._raster import convolve_taps, convolve_taps_adjoint, round_half_away
from .geometry import (CameraIntrinsics, Trajectory, depth_sequence_2d,
                       inplane_translations, pan_tilt_angles, resample_trajectory)
from .kernels import (BlurKernel, add_kernels, compose_kernels, kernels_at_depths,
                      rotation_kernel)
from .layering import (DepthMap, LayerDecomposition, assign_regions, decompose,
                       optimal_layer_depths)

__all__ = [
    "Image",
    "BlurConfig",
    "convolve",
    "icb_apply",
    "icb_adjoint",
    "icb_forward",
    "pwb_forward",
    "build_compositing",
    "synthesize",
]


@dataclass(frozen=True)
class Image:
    """Intensity raster in [0, 1], stored planar (H, W, C) float32.

    Values are only clamped at export; intermediate results may drift
    slightly outside the range.
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float32)
        if vals.ndim == 2:
            vals = vals[:, :, None]
        if vals.ndim != 3 or vals.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W) or (H, W, {{1,3}}) raster, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("image values must be finite")
        object.__setattr__(self, "values", np.ascontiguousarray(vals))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class BlurConfig:
    """Hyperparameters of the forward model.

    ``n`` is the per-band blur-variation step in pixels, ``sigma`` the
    matte smoothing width; ``d_min`` defaults to the depth-map minimum.
    ``samples`` is the uniform trajectory resampling count.
    """

    n: int = 1
    sigma: float = 4.0
    d_min: float | None = None
    samples: int = 64
    padding: str = "replicate"
    rotation_compose: str = "convolve"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.d_min is not None and self.d_min <= 0:
            raise ValueError("d_min must be positive")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.padding not in ("replicate", "zero"):
            raise ValueError(f"unknown padding {self.padding!r}")
        if self.rotation_compose not in ("convolve", "add"):
            raise ValueError(f"unknown rotation_compose {self.rotation_compose!r}")


def convolve(img: Image, kernel: BlurKernel, padding: str = "replicate") -> Image:
    """Convolve every channel with the kernel about its anchor, same size."""
    out = convolve_taps(img.values, kernel.weights, kernel.anchor, padding)
    return Image(out.astype(np.float32))


def icb_apply(values: np.ndarray, kernels, mattes, padding: str = "replicate") -> np.ndarray:
    """Array-level compositing blur: sum of matte-weighted layer convolutions.

    Works in float64; layers with identically zero mattes are skipped.
    """
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros_like(values)
    for kern, matte in zip(kernels, mattes):
        matte = np.asarray(matte, dtype=np.float64)
        if not matte.any():
            continue
        blurred = convolve_taps(values, kern.weights, kern.anchor, padding)
        out += blurred * matte[:, :, None]
    return out


def icb_adjoint(values: np.ndarray, kernels, mattes, padding: str = "replicate") -> np.ndarray:
    """Adjoint of :func:`icb_apply` (matte-weight, then adjoint-convolve)."""
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros_like(values)
    for kern, matte in zip(kernels, mattes):
        matte = np.asarray(matte, dtype=np.float64)
        if not matte.any():
            continue
        out += convolve_taps_adjoint(values * matte[:, :, None],
                                     kern.weights, kern.anchor, padding)
    return out


def icb_forward(x: Image, kernels, mattes, padding: str = "replicate") -> Image:
    """Compositing blur of an image given per-layer kernels and mattes."""
    if len(kernels) != len(mattes):
        raise ValueError(f"{len(kernels)} kernels vs {len(mattes)} mattes")
    return Image(icb_apply(x.values, kernels, mattes, padding).astype(np.float32))


def _gather_indices(traj: Trajectory, intr: CameraIntrinsics, depth_values: np.ndarray):
    """Per-sample clamped gather indices implementing the pixel-wise model."""
    h, w = depth_values.shape
    depth = depth_values.astype(np.float64)
    s = inplane_translations(traj)
    rows_base, cols_base = np.mgrid[0:h, 0:w]
    for sx, sy in s:
        ux = round_half_away(-sx * intr.focal_length / (intr.pixel_pitch_x * depth))
        uy = round_half_away(-sy * intr.focal_length / (intr.pixel_pitch_y * depth))
        rows = np.clip(rows_base - uy, 0, h - 1)
        cols = np.clip(cols_base - ux, 0, w - 1)
        yield rows, cols


def pwb_forward(x: Image, depth: DepthMap, traj: Trajectory,
                intr: CameraIntrinsics) -> Image:
    """Pixel-wise blur baseline: each pixel convolved with its own kernel.

    Evaluated as the mean over per-sample gathers, which is exactly the
    EPDF-kernel formulation with edge replication and never stores a
    kernel field.
    """
    vals = x.values.astype(np.float64)
    if depth.values.shape != vals.shape[:2]:
        raise ValueError("depth map and image sizes differ")
    acc = np.zeros_like(vals)
    for rows, cols in _gather_indices(traj, intr, depth.values):
        acc += vals[rows, cols, :]
    return Image((acc / len(traj)).astype(np.float32))


def build_compositing(depth: DepthMap, traj: Trajectory, intr: CameraIntrinsics,
                      cfg: BlurConfig, reference_index: int | None = None
                      ) -> tuple[LayerDecomposition, list[BlurKernel]]:
    """Resolve trajectory + depth map into layer mattes and kernels.

    Resamples the trajectory uniformly, derives the merged band sequence,
    builds per-layer kernels at the MSE-optimal depths, composes in the
    global pan-tilt kernel when rotations are present, and sizes each
    layer's soft mask to its kernel.
    """
    traj_r = resample_trajectory(traj, cfg.samples, reference_index)
    d_min = cfg.d_min if cfg.d_min is not None else float(depth.values.min())
    seq = depth_sequence_2d(traj_r, intr, cfg.n, d_min)
    labels = assign_regions(depth, seq)
    depths = optimal_layer_depths(depth, labels, seq)
    kerns = kernels_at_depths(traj_r, intr, depths)
    if np.any(np.abs(pan_tilt_angles(traj_r)) > 0):
        rot = rotation_kernel(traj_r, intr)
        if not rot.is_identity:
            combine = compose_kernels if cfg.rotation_compose == "convolve" else add_kernels
            kerns = [combine(k, rot) for k in kerns]
    supports = [k.symmetric_support() for k in kerns]
    return decompose(depth, seq, supports, cfg.sigma), kerns


def synthesize(x: Image, depth: DepthMap, traj: Trajectory, intr: CameraIntrinsics,
               cfg: BlurConfig, model: str = "icb",
               reference_index: int | None = None):
    """End-to-end blur synthesis; returns (blurred, decomposition-or-None)."""
    if model == "icb":
        decomposition, kerns = build_compositing(depth, traj, intr, cfg, reference_index)
        out = icb_forward(x, kerns, decomposition.mattes, cfg.padding)
        return out, decomposition
    if model == "pwb":
        traj_r = resample_trajectory(traj, cfg.samples, reference_index)
        return pwb_forward(x, depth, traj_r, intr), None
    raise ValueError(f"unknown model {model!r}")
