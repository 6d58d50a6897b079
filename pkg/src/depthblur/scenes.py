"""Procedural scene fixtures: textured layers, depth maps, camera paths.

Stand-ins for captured data: a smooth textured background with solid
rectangles at preset-consistent depths, plus either a sinusoidal hand-shake
path (macro/standard) or a constant-velocity lateral path (trucking).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blur import Image
from .geometry import CameraIntrinsics, Pose, Trajectory
from .layering import DepthMap

__all__ = [
    "SceneFixture",
    "gen_scene",
    "shake_trajectory",
    "linear_trajectory",
    "default_intrinsics",
]

PRESETS = ("macro", "trucking", "standard")

# Mobile ultrawide-style optics: 2.8 mm focal length, 4 um pixels.
DEFAULT_FOCAL = 2.8e-3
DEFAULT_PITCH = 4e-6

MACRO_NEAR_LIMIT = 0.1  # nearest macro target must sit within this depth [m]


@dataclass(frozen=True)
class SceneFixture:
    sharp: Image
    depth: DepthMap
    trajectory: Trajectory
    intrinsics: CameraIntrinsics
    preset: str


def default_intrinsics(width: int, height: int) -> CameraIntrinsics:
    return CameraIntrinsics(DEFAULT_FOCAL, DEFAULT_PITCH, DEFAULT_PITCH, width, height)


def shake_trajectory(seed: int, amplitude: float = 3e-3, duration: float = 0.25,
                     count: int = 65) -> Trajectory:
    """Smooth hand-shake path: per-axis sums of low-frequency sinusoids,
    normalized so the maximum in-plane excursion from the mid reference is
    exactly ``amplitude`` on x (and a seed-dependent fraction on y)."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, duration, count)
    ref = count // 2
    axes = []
    scale_y = rng.uniform(0.4, 1.0)
    for axis_amp in (amplitude, amplitude * scale_y):
        v = np.zeros_like(t)
        for _ in range(3):
            freq = rng.uniform(2.0, 8.0)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            v += rng.uniform(0.5, 1.0) * np.sin(2.0 * np.pi * freq * t + phase)
        v = v - v[ref]
        peak = np.abs(v).max()
        if peak > 0:
            v *= axis_amp / peak
        axes.append(v)
    poses = tuple(Pose(float(ti), (float(x), float(y), 0.0))
                  for ti, x, y in zip(t, axes[0], axes[1]))
    return Trajectory(poses, ref)


def linear_trajectory(seed: int, travel: float = 0.12, duration: float = 0.25,
                      count: int = 65) -> Trajectory:
    """Constant-speed straight path in the xy plane, total length ``travel``."""
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    direction = np.array([np.cos(angle), np.sin(angle)])
    t = np.linspace(0.0, duration, count)
    offsets = (t / duration - 0.5) * travel
    poses = tuple(Pose(float(ti), (float(o * direction[0]), float(o * direction[1]), 0.0))
                  for ti, o in zip(t, offsets))
    return Trajectory(poses, count // 2)


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth multi-channel base texture: gradient plus low-frequency waves."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size, 3))
    for ch in range(3):
        gx, gy = rng.uniform(-0.5, 0.5, size=2)
        tex = 0.5 + gx * (xx - 0.5) + gy * (yy - 0.5)
        for _ in range(3):
            fx, fy = rng.uniform(1.0, 6.0, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            tex += rng.uniform(0.05, 0.18) * np.sin(
                2.0 * np.pi * (fx * xx + fy * yy) + phase)
        img[:, :, ch] = tex
    return img


def _background_depth(rng, size: int, near: float, far: float,
                      continuous: bool) -> np.ndarray:
    if not continuous:
        return np.full((size, size), (near + far) / 2.0)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    ramp = (xx - 0.5) * np.cos(angle) + (yy - 0.5) * np.sin(angle) + 0.5
    # Slanted plane in inverse depth keeps band populations balanced.
    inv = (1.0 / near) * (1.0 - ramp) + (1.0 / far) * ramp
    return 1.0 / inv


def gen_scene(preset: str, size: int, seed: int, objects: int = 3,
              continuous_depth: bool = False,
              shake_amplitude: float = 3e-3) -> SceneFixture:
    """Deterministic procedural fixture for a capture preset.

    macro:    shake path, nearest target within 0.1 m;
    trucking: constant-speed lateral path, mid-range scene;
    standard: shake path with every depth beyond the static band edge.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}, expected one of {PRESETS}")
    if size < 32:
        raise ValueError("size must be >= 32")
    if preset == "macro" and objects < 1:
        raise ValueError("macro scenes need at least one near object")
    rng = np.random.default_rng(seed)
    intr = default_intrinsics(size, size)

    if preset == "macro":
        traj = shake_trajectory(seed, amplitude=shake_amplitude)
        bg_range, obj_range = (0.2, 0.5), (0.07, 0.25)
    elif preset == "trucking":
        traj = linear_trajectory(seed)
        bg_range, obj_range = (20.0, 60.0), (5.0, 15.0)
    else:
        traj = shake_trajectory(seed, amplitude=shake_amplitude)
        static_edge = 2.0 * shake_amplitude * intr.focal_length / intr.pixel_pitch_x
        bg_range = (4.0 * static_edge, 8.0 * static_edge)
        obj_range = (1.2 * static_edge, 3.0 * static_edge)

    img = _texture(rng, size)
    depth = _background_depth(rng, size, *bg_range, continuous=continuous_depth)

    for idx in range(objects):
        w = rng.integers(size // 6, size // 3 + 1)
        h = rng.integers(size // 6, size // 3 + 1)
        x0 = rng.integers(2, size - w - 2)
        y0 = rng.integers(2, size - h - 2)
        color = rng.uniform(0.1, 0.9, size=3)
        d = rng.uniform(*obj_range)
        if preset == "macro" and idx == objects - 1:
            # Drawn last so the near target is never fully painted over.
            d = rng.uniform(obj_range[0], MACRO_NEAR_LIMIT)
        img[y0:y0 + h, x0:x0 + w] = color
        depth[y0:y0 + h, x0:x0 + w] = d

    img = np.clip(img, 0.02, 0.98)
    return SceneFixture(Image(img.astype(np.float32)),
                        DepthMap(depth.astype(np.float32)),
                        traj, intr, preset)
