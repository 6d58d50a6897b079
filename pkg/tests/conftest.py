import numpy as np
import pytest

from depthblur.geometry import CameraIntrinsics, Pose, Trajectory

FOCAL = 2.8e-3
PITCH = 4e-6


def make_intrinsics(width=64, height=64, pitch_x=PITCH, pitch_y=PITCH):
    return CameraIntrinsics(FOCAL, pitch_x, pitch_y, width, height)


def make_linear_traj(total=3e-3, samples=5, reference_index=0, axis="x",
                     duration=1.0):
    """Straight-line in-plane path from 0 to ``total`` meters on one axis."""
    times = np.linspace(0.0, duration, samples)
    offsets = np.linspace(0.0, total, samples)
    poses = []
    for t, s in zip(times, offsets):
        translation = (s, 0.0, 0.0) if axis == "x" else (0.0, s, 0.0)
        poses.append(Pose(float(t), translation))
    return Trajectory(tuple(poses), reference_index)


def make_static_traj(samples=5):
    times = np.linspace(0.0, 1.0, samples)
    return Trajectory(tuple(Pose(float(t), (0.0, 0.0, 0.0)) for t in times),
                      samples // 2)


@pytest.fixture
def intrinsics():
    return make_intrinsics()
