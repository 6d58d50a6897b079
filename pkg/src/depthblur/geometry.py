"""Camera geometry: intrinsics, trajectories, blur-extent analysis, depth bands.

The depth-band machinery quantizes a depth map into layers whose blur
extent differs by a whole number of pixels between consecutive bands; the
band edges follow the closed form ``D_l = 2*kappa / (2*l*n + 1)`` with
``kappa = s_max * F / pitch``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

__all__ = [
    "CameraIntrinsics",
    "Pose",
    "Trajectory",
    "DepthSequence",
    "blur_extent",
    "blur_variation",
    "displacement_for_variation",
    "depth_band_edge",
    "depth_sequence_1d",
    "depth_sequence_2d",
    "resample_trajectory",
    "inplane_translations",
    "axis_max_displacements",
    "pan_tilt_angles",
]

# Relative tolerance for deduplicating nearly equal band edges when the two
# per-axis sequences are merged; avoids zero-area layers.
MERGE_DEDUP_RTOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with per-axis pixel pitch (meters per pixel)."""

    focal_length: float
    pixel_pitch_x: float
    pixel_pitch_y: float
    width: int
    height: int
    principal_point: tuple[float, float] | None = None

    def __post_init__(self):
        if self.focal_length <= 0:
            raise ValueError(f"focal_length must be > 0, got {self.focal_length}")
        if self.pixel_pitch_x <= 0 or self.pixel_pitch_y <= 0:
            raise ValueError("pixel pitches must be > 0")
        if self.width < 1 or self.height < 1:
            raise ValueError("sensor resolution must be at least 1x1")
        if self.principal_point is None:
            object.__setattr__(
                self, "principal_point", (self.width / 2.0, self.height / 2.0)
            )
        cx, cy = self.principal_point
        if not (0 <= cx < self.width and 0 <= cy < self.height):
            raise ValueError(f"principal point {self.principal_point} outside sensor")


@dataclass(frozen=True)
class Pose:
    """Camera pose sample: time [s], translation [m], camera-to-world quaternion.

    The quaternion is stored as ``(w, x, y, z)`` and must be unit norm
    within 1e-9 (loaders renormalize before constructing).
    """

    time: float
    translation: tuple[float, float, float]
    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        norm = math.sqrt(sum(q * q for q in self.rotation))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {norm} deviates from 1 by more than 1e-9")

    def as_rotation(self) -> Rotation:
        w, x, y, z = self.rotation
        return Rotation.from_quat([x, y, z, w])


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered camera poses plus the index of the reference (sharp) pose."""

    poses: tuple[Pose, ...]
    reference_index: int

    def __post_init__(self):
        if len(self.poses) < 1:
            raise ValueError("trajectory needs at least one pose")
        times = [p.time for p in self.poses]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("pose times must be strictly increasing")
        if not 0 <= self.reference_index < len(self.poses):
            raise ValueError(
                f"reference_index {self.reference_index} out of range [0, {len(self.poses)})"
            )

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def times(self) -> np.ndarray:
        return np.array([p.time for p in self.poses], dtype=np.float64)

    @property
    def translations(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses], dtype=np.float64)

    @property
    def reference(self) -> Pose:
        return self.poses[self.reference_index]


def resample_trajectory(traj: Trajectory, samples: int,
                        reference_index: int | None = None) -> Trajectory:
    """Resample to ``samples`` uniform time steps (lerp translation, slerp rotation).

    Uniform resampling realizes the uniform-exposure-time weighting: every
    resampled pose contributes 1/M to the blur. The reference defaults to
    the mid-trajectory sample.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if reference_index is None:
        reference_index = samples // 2 if samples > 1 else 0
    if not 0 <= reference_index < samples:
        raise ValueError(f"reference_index {reference_index} out of range")
    if samples == 1:
        return Trajectory((traj.reference,), 0)
    if len(traj) == 1:
        # A single pose carries no time span to resample over.
        return traj
    times = traj.times
    new_times = np.linspace(times[0], times[-1], samples)
    trans = traj.translations
    new_trans = np.stack(
        [np.interp(new_times, times, trans[:, k]) for k in range(3)], axis=1
    )
    quats_xyzw = np.array(
        [[p.rotation[1], p.rotation[2], p.rotation[3], p.rotation[0]] for p in traj.poses]
    )
    slerp = Slerp(times, Rotation.from_quat(quats_xyzw))
    new_rots = slerp(new_times).as_quat()
    poses = []
    for t, tr, q in zip(new_times, new_trans, new_rots):
        q = q / np.linalg.norm(q)
        poses.append(Pose(float(t), tuple(map(float, tr)),
                          (float(q[3]), float(q[0]), float(q[1]), float(q[2]))))
    return Trajectory(tuple(poses), reference_index)


def inplane_translations(traj: Trajectory) -> np.ndarray:
    """Per-pose (x, y) translation relative to the reference pose, expressed
    in the reference camera frame. Shape (M, 2), meters."""
    ref = traj.reference
    rel = traj.translations - np.asarray(ref.translation)
    in_ref = ref.as_rotation().inv().apply(rel)
    return in_ref[:, :2]


def axis_max_displacements(traj: Trajectory) -> tuple[float, float]:
    """Per-axis maximum absolute in-plane displacement from the reference pose."""
    s = np.abs(inplane_translations(traj))
    return float(s[:, 0].max()), float(s[:, 1].max())


def pan_tilt_angles(traj: Trajectory) -> np.ndarray:
    """Per-pose (pan, tilt) angles [rad] relative to the reference pose.

    Pan is the rotation-vector component about the camera y axis, tilt the
    component about x; roll (z) is discarded by the small-angle pan-tilt
    approximation.
    """
    ref_rot = traj.reference.as_rotation()
    out = np.zeros((len(traj), 2), dtype=np.float64)
    for m, pose in enumerate(traj.poses):
        rotvec = (ref_rot.inv() * pose.as_rotation()).as_rotvec()
        out[m, 0] = rotvec[1]
        out[m, 1] = rotvec[0]
    return out


def blur_extent(s: float, intrinsics: CameraIntrinsics, depth) -> float:
    """Image-plane translation ``s * F / depth`` [m] of a point at ``depth``.

    Divide by the pixel pitch to get pixels. ``depth`` may be an array.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise ValueError("depth must be positive")
    out = s * intrinsics.focal_length / depth
    return float(out) if out.ndim == 0 else out


def blur_variation(s: float, intrinsics: CameraIntrinsics, d_near: float, delta_d) -> float:
    """Difference in blur extent [m] between depths ``d_near`` and ``d_near + delta_d``.

    Monotone in ``delta_d`` and bounded above by ``blur_extent(s, ., d_near)``,
    the never-attained far-field limit.
    """
    if d_near <= 0:
        raise ValueError("d_near must be positive")
    delta_d = np.asarray(delta_d, dtype=np.float64)
    if np.any(delta_d < 0):
        raise ValueError("delta_d must be nonnegative")
    sF = s * intrinsics.focal_length
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(delta_d == 0, 0.0, sF / (d_near * (d_near / delta_d + 1.0)))
    return float(out) if out.ndim == 0 else out


def displacement_for_variation(delta_t: float, intrinsics: CameraIntrinsics,
                               d_near: float, delta_d) -> float:
    """Camera displacement [m] producing blur variation ``delta_t`` [m].

    Closed-form inversion of :func:`blur_variation` in ``s``.
    """
    if d_near <= 0:
        raise ValueError("d_near must be positive")
    delta_d = np.asarray(delta_d, dtype=np.float64)
    if np.any(delta_d <= 0):
        raise ValueError("delta_d must be positive to invert")
    out = delta_t * d_near * (d_near / delta_d + 1.0) / intrinsics.focal_length
    return float(out) if out.ndim == 0 else out


def depth_band_edge(kappa: float, n: int, l: int) -> float:
    """Closed-form band edge ``2*kappa / (2*l*n + 1)``."""
    return 2.0 * kappa / (2.0 * l * n + 1.0)


@dataclass(frozen=True)
class DepthSequence:
    """Strictly decreasing depth band edges, optionally merged from two axes.

    ``kappa_x``/``kappa_y`` are the per-axis ``s_max * F / pitch`` scales a
    value may originate from (0 marks a static axis contributing no edges).
    A fully static trajectory is the single sentinel value ``inf``: one
    layer whose kernel is the identity.
    """

    values: tuple[float, ...]
    n: int
    kappa_x: float
    kappa_y: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if len(self.values) < 1:
            raise ValueError("sequence must not be empty")
        vals = np.asarray(self.values, dtype=np.float64)
        if np.any(vals <= 0):
            raise ValueError("depth values must be positive")
        if np.any(np.diff(vals) >= 0):
            raise ValueError("depth values must be strictly decreasing")
        for v in vals[np.isfinite(vals)]:
            if not (self._on_axis(v, self.kappa_x) or self._on_axis(v, self.kappa_y)):
                raise ValueError(f"value {v} is not a band edge for either axis")

    def _on_axis(self, value: float, kappa: float) -> bool:
        if kappa <= 0:
            return False
        l = (2.0 * kappa / value - 1.0) / (2.0 * self.n)
        return l > -1e-9 and abs(l - round(l)) <= 1e-6

    @property
    def is_static(self) -> bool:
        return math.isinf(self.values[0])

    def __len__(self) -> int:
        return len(self.values)

    def band(self, l: int) -> tuple[float, float]:
        """(lower, upper) depth bounds of layer ``l``; layer 0 is unbounded above."""
        upper = math.inf if l == 0 else self.values[l - 1]
        return self.values[l], upper


def depth_sequence_1d(s_max: float, focal: float, pitch: float, n: int,
                      d_min: float) -> DepthSequence:
    """Band edges for a one-axis motion of max displacement ``s_max``.

    Edges are emitted until the minimum scene depth ``d_min`` is covered;
    a static axis (``s_max == 0``) collapses to the single infinite layer.
    """
    if d_min <= 0:
        raise ValueError("d_min must be positive")
    if s_max < 0:
        raise ValueError("s_max must be nonnegative")
    if n < 1:
        raise ValueError("n must be >= 1")
    if s_max == 0.0:
        return DepthSequence((math.inf,), n, 0.0, 0.0)
    kappa = s_max * focal / pitch
    values = [depth_band_edge(kappa, n, 0)]
    l = 1
    while values[-1] > d_min:
        values.append(depth_band_edge(kappa, n, l))
        l += 1
    return DepthSequence(tuple(values), n, kappa, kappa)


def depth_sequence_2d(traj: Trajectory, intrinsics: CameraIntrinsics, n: int,
                      d_min: float) -> DepthSequence:
    """Merged x/y band edges for a 2D in-plane trajectory.

    Component sequences are computed with the per-axis (s_max, pitch) pairs
    and merged as the descending, deduplicated union.
    """
    s_max_x, s_max_y = axis_max_displacements(traj)
    per_axis = []
    kappas = []
    for s_max, pitch in ((s_max_x, intrinsics.pixel_pitch_x),
                         (s_max_y, intrinsics.pixel_pitch_y)):
        if s_max > 0:
            seq = depth_sequence_1d(s_max, intrinsics.focal_length, pitch, n, d_min)
            per_axis.append(seq.values)
            kappas.append(s_max * intrinsics.focal_length / pitch)
        else:
            per_axis.append(())
            kappas.append(0.0)
    if not any(per_axis):
        return DepthSequence((math.inf,), n, 0.0, 0.0)
    merged = []
    for v in sorted([v for vals in per_axis for v in vals], reverse=True):
        if not merged or abs(merged[-1] - v) > MERGE_DEDUP_RTOL * max(abs(merged[-1]), abs(v)):
            merged.append(v)
    return DepthSequence(tuple(merged), n, kappas[0], kappas[1])
