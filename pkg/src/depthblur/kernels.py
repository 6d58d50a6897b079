"""Motion-blur kernel construction.

Kernels are empirical probability densities of rounded pixel displacements
along the trajectory: one kernel per depth layer for the compositing model,
or one per pixel for the pixel-wise baseline. Weights are rational counts
over the number of trajectory samples, so they sum to one up to float
storage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from ._raster import round_half_away
from .geometry import CameraIntrinsics, Trajectory, inplane_translations, pan_tilt_angles

__all__ = [
    "BlurKernel",
    "DisplacementSet",
    "pixel_displacements",
    "rotation_displacements",
    "epdf_kernel",
    "kernels_at_depths",
    "layer_kernels",
    "rotation_kernel",
    "compose_kernels",
    "add_kernels",
    "identity_kernel",
    "PixelwiseKernelField",
]

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class BlurKernel:
    """Dense 2D blur kernel with an integer anchor at the zero-displacement tap.

    ``anchor`` is (column, row) of the zero tap inside ``weights``; weights
    are nonnegative and sum to one.
    """

    weights: np.ndarray
    anchor: tuple[int, int]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2:
            raise ValueError("kernel weights must be a 2D raster")
        if np.any(w < 0):
            raise ValueError("kernel weights must be nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"kernel weights sum to {w.sum()}, expected 1")
        ax, ay = self.anchor
        if not (0 <= ax < w.shape[1] and 0 <= ay < w.shape[0]):
            raise ValueError(f"anchor {self.anchor} outside {w.shape} raster")

    @property
    def support(self) -> tuple[int, int]:
        """(width, height) of the weight raster."""
        return self.weights.shape[1], self.weights.shape[0]

    @property
    def is_identity(self) -> bool:
        return self.weights.shape == (1, 1)

    def symmetric_support(self) -> tuple[int, int]:
        """Odd (width, height) window centered on the anchor covering every tap."""
        ax, ay = self.anchor
        rx = max(ax, self.weights.shape[1] - 1 - ax)
        ry = max(ay, self.weights.shape[0] - 1 - ay)
        return 2 * rx + 1, 2 * ry + 1


def identity_kernel() -> BlurKernel:
    return BlurKernel(np.ones((1, 1)), (0, 0))


@dataclass(frozen=True)
class DisplacementSet:
    """Real-valued (dx, dy) pixel displacements, one per trajectory sample,
    relative to the reference pose (which contributes (0, 0))."""

    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        dx = np.asarray(self.dx, dtype=np.float64)
        dy = np.asarray(self.dy, dtype=np.float64)
        if dx.shape != dy.shape or dx.ndim != 1 or dx.size == 0:
            raise ValueError("dx/dy must be equal-length nonempty 1D arrays")
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)

    def __len__(self) -> int:
        return self.dx.size

    def negated(self) -> "DisplacementSet":
        return DisplacementSet(-self.dx, -self.dy)


def pixel_displacements(traj: Trajectory, intr: CameraIntrinsics,
                        depth: float) -> DisplacementSet:
    """Displacements ``-s(t) * F / (pitch * depth)`` for a point at ``depth``.

    A point recedes opposite the camera translation, hence the sign flip.
    ``depth == inf`` is allowed and yields the all-zero set.
    """
    if not depth > 0:
        raise ValueError(f"depth must be positive, got {depth}")
    s = inplane_translations(traj)
    scale = intr.focal_length / depth if math.isfinite(depth) else 0.0
    return DisplacementSet(-s[:, 0] * scale / intr.pixel_pitch_x,
                           -s[:, 1] * scale / intr.pixel_pitch_y)


def rotation_displacements(traj: Trajectory, intr: CameraIntrinsics) -> DisplacementSet:
    """Depth-independent displacements equivalent to small pan/tilt rotations."""
    angles = pan_tilt_angles(traj)
    dx = intr.focal_length * angles[:, 0] / intr.pixel_pitch_x
    dy = intr.focal_length * angles[:, 1] / intr.pixel_pitch_y
    return DisplacementSet(dx, dy)


def epdf_kernel(disp: DisplacementSet) -> BlurKernel:
    """Empirical density of rounded displacements on their tight bounding box.

    Ties round away from zero. The box is grown to include the origin tap
    if necessary so the anchor always lies inside the raster.
    """
    rx = round_half_away(disp.dx)
    ry = round_half_away(disp.dy)
    x_min, x_max = min(rx.min(), 0), max(rx.max(), 0)
    y_min, y_max = min(ry.min(), 0), max(ry.max(), 0)
    weights = np.zeros((y_max - y_min + 1, x_max - x_min + 1), dtype=np.float64)
    taps, counts = np.unique(np.stack([ry, rx], axis=1), axis=0, return_counts=True)
    m = len(disp)
    for (ty, tx), count in zip(taps, counts):
        weights[ty - y_min, tx - x_min] = count / m
    return BlurKernel(weights, (int(-x_min), int(-y_min)))


def kernels_at_depths(traj: Trajectory, intr: CameraIntrinsics,
                      depths) -> list[BlurKernel]:
    """One EPDF kernel per representative depth."""
    return [epdf_kernel(pixel_displacements(traj, intr, d)) for d in depths]


def layer_kernels(traj: Trajectory, intr: CameraIntrinsics,
                  decomposition) -> list[BlurKernel]:
    """Kernels at a decomposition's optimal layer depths."""
    return kernels_at_depths(traj, intr, decomposition.optimal_depths)


def rotation_kernel(traj: Trajectory, intr: CameraIntrinsics) -> BlurKernel:
    """Global pan-tilt kernel from the small-angle xy-translation equivalence.

    Roll and z translation are ignored by construction.
    """
    return epdf_kernel(rotation_displacements(traj, intr))


def compose_kernels(a: BlurKernel, b: BlurKernel) -> BlurKernel:
    """Sequential composition of two blur processes: full convolution.

    Anchors add; weights are renormalized to absorb float drift.
    """
    weights = convolve2d(a.weights, b.weights, mode="full")
    weights = np.maximum(weights, 0.0)
    weights /= weights.sum()
    return BlurKernel(weights, (a.anchor[0] + b.anchor[0], a.anchor[1] + b.anchor[1]))


def add_kernels(a: BlurKernel, b: BlurKernel, weight: float = 0.5) -> BlurKernel:
    """Convex blend of two kernels on the union of their supports.

    The alternative reading of stacking a global rotation kernel "on top
    of" the layer kernels; anchors are aligned before blending.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must be in [0, 1]")
    ax = max(a.anchor[0], b.anchor[0])
    ay = max(a.anchor[1], b.anchor[1])
    w = max(a.weights.shape[1] - a.anchor[0], b.weights.shape[1] - b.anchor[0]) + ax
    h = max(a.weights.shape[0] - a.anchor[1], b.weights.shape[0] - b.anchor[1]) + ay
    out = np.zeros((h, w), dtype=np.float64)
    for kern, wgt in ((a, weight), (b, 1.0 - weight)):
        oy, ox = ay - kern.anchor[1], ax - kern.anchor[0]
        out[oy:oy + kern.weights.shape[0], ox:ox + kern.weights.shape[1]] += wgt * kern.weights
    out /= out.sum()
    return BlurKernel(out, (ax, ay))


class PixelwiseKernelField:
    """Lazy per-pixel kernel accessor for the pixel-wise baseline.

    Kernels are built on demand and cached per distinct depth value;
    :meth:`materialize` produces honest per-pixel copies so the memory
    footprint of the baseline can be measured.
    """

    def __init__(self, traj: Trajectory, intr: CameraIntrinsics, depth):
        from .layering import DepthMap  # local import to avoid a cycle

        self._traj = traj
        self._intr = intr
        self._depth = depth.values if isinstance(depth, DepthMap) else np.asarray(depth)
        self._cache: dict[float, BlurKernel] = {}

    @property
    def shape(self) -> tuple[int, int]:
        return self._depth.shape

    def kernel_at(self, row: int, col: int) -> BlurKernel:
        d = float(self._depth[row, col])
        kern = self._cache.get(d)
        if kern is None:
            kern = epdf_kernel(pixel_displacements(self._traj, self._intr, d))
            self._cache[d] = kern
        return kern

    def materialize(self) -> list[BlurKernel]:
        """Row-major list of per-pixel kernels, each with its own weight raster."""
        h, w = self._depth.shape
        out = []
        for i in range(h):
            for j in range(w):
                kern = self.kernel_at(i, j)
                out.append(BlurKernel(kern.weights.copy(), kern.anchor))
        return out

    def materialized_weight_count(self) -> int:
        """Total number of stored weights if the field were materialized."""
        h, w = self._depth.shape
        total = 0
        for i in range(h):
            for j in range(w):
                total += self.kernel_at(i, j).weights.size
        return total
