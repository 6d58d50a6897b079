"""File formats: images (PNG/PPM/PGM), PFM depth maps, trajectory CSV, config.

All writers go through a same-directory temp file plus atomic rename, so a
failed save never leaves a partial output behind.
"""
from __future__ import annotations

import csv
import json
import math
import os
import struct
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .blur import BlurConfig, Image
from .geometry import CameraIntrinsics, Pose, Trajectory
from .layering import DepthMap

__all__ = [
    "load_image",
    "save_image",
    "load_depth",
    "save_depth",
    "load_trajectory",
    "save_trajectory",
    "ModelConfig",
    "load_config",
    "atomic_write",
    "save_json",
]

TRAJECTORY_COLUMNS = ["t_s", "tx_m", "ty_m", "tz_m", "qw", "qx", "qy", "qz"]
QUATERNION_NORM_TOL = 1e-3


@contextmanager
def atomic_write(path, mode="wb"):
    """Yield a temp-file handle that replaces ``path`` only on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _quantize(values: np.ndarray, maxval: int) -> np.ndarray:
    """Clamp to [0, 1] and quantize, rounding halves away from zero."""
    clamped = np.clip(values.astype(np.float64), 0.0, 1.0)
    return np.floor(clamped * maxval + 0.5).astype(np.uint16 if maxval > 255 else np.uint8)


# ---------------------------------------------------------------------------
# Images: PNG via Pillow, binary PPM/PGM natively
# ---------------------------------------------------------------------------

def load_image(path) -> Image:
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix in (".ppm", ".pgm", ".pnm"):
            return _load_pnm(path)
        return _load_png(path)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot load image {path}: {exc}") from exc


def _load_png(path) -> Image:
    with PILImage.open(path) as pil:
        mode = pil.mode
        if mode == "P":
            pil = pil.convert("RGB")
            mode = "RGB"
        if mode in ("L", "RGB"):
            arr = np.asarray(pil, dtype=np.float64) / 255.0
        elif mode in ("I;16", "I"):
            arr = np.asarray(pil, dtype=np.float64) / 65535.0
        else:
            raise ValueError(f"unsupported image mode {mode!r}")
    return Image(arr.astype(np.float32))


def save_image(path, img: Image, bit_depth: int = 8) -> None:
    path = Path(path)
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pgm", ".pnm"):
        _save_pnm(path, img, bit_depth)
        return
    if suffix != ".png":
        raise ValueError(f"unsupported image extension {suffix!r}")
    vals = img.values[:, :, 0] if img.channels == 1 else img.values
    if bit_depth == 8:
        pil = PILImage.fromarray(_quantize(vals, 255), mode="L" if img.channels == 1 else "RGB")
    else:
        if img.channels != 1:
            raise ValueError("16-bit PNG supports grayscale only; use .ppm for 16-bit color")
        pil = PILImage.fromarray(_quantize(vals, 65535).astype(np.uint16))
    with atomic_write(path) as fh:
        pil.save(fh, format="PNG")


def _read_pnm_token(fh) -> bytes:
    token = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise ValueError("truncated header")
        if ch in b" \t\r\n":
            if token:
                return token
            continue
        if ch == b"#":
            while fh.read(1) not in (b"\n", b""):
                pass
            continue
        token += ch


def _load_pnm(path) -> Image:
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic not in (b"P5", b"P6"):
            raise ValueError(f"unsupported PNM magic {magic!r} (binary P5/P6 only)")
        width = int(_read_pnm_token(fh))
        height = int(_read_pnm_token(fh))
        maxval = int(_read_pnm_token(fh))
        if maxval not in (255, 65535):
            raise ValueError(f"unsupported maxval {maxval}")
        channels = 3 if magic == b"P6" else 1
        dtype = ">u2" if maxval == 65535 else np.uint8
        count = width * height * channels
        raw = np.frombuffer(fh.read(), dtype=dtype, count=count)
    arr = raw.reshape(height, width, channels).astype(np.float64) / maxval
    return Image(arr.astype(np.float32))


def _save_pnm(path, img: Image, bit_depth: int) -> None:
    maxval = 255 if bit_depth == 8 else 65535
    magic = b"P5" if img.channels == 1 else b"P6"
    quant = _quantize(img.values, maxval)
    data = quant.astype(">u2" if maxval == 65535 else np.uint8).tobytes()
    with atomic_write(path) as fh:
        fh.write(magic + b"\n%d %d\n%d\n" % (img.width, img.height, maxval))
        fh.write(data)


# ---------------------------------------------------------------------------
# PFM depth maps ("Pf" grayscale, bottom-up rows, scale sign = endianness)
# ---------------------------------------------------------------------------

def load_depth(path) -> DepthMap:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            magic = _read_pnm_token(fh)
            if magic == b"PF":
                raise ValueError("color PFM ('PF') not supported, expected grayscale 'Pf'")
            if magic != b"Pf":
                raise ValueError(f"not a PFM file (magic {magic!r})")
            width = int(_read_pnm_token(fh))
            height = int(_read_pnm_token(fh))
            scale = float(_read_pnm_token(fh))
            dtype = "<f4" if scale < 0 else ">f4"
            raw = np.frombuffer(fh.read(), dtype=dtype, count=width * height)
        rows = raw.reshape(height, width)[::-1]  # PFM stores rows bottom-up
        if abs(scale) not in (0.0, 1.0):
            rows = rows * np.float32(abs(scale))
        bad = int(np.count_nonzero(~np.isfinite(rows) | (rows <= 0)))
        if bad:
            raise ValueError(f"{bad} pixels are non-positive or non-finite")
        return DepthMap(np.ascontiguousarray(rows, dtype=np.float32))
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot load depth map {path}: {exc}") from exc


def save_depth(path, depth: DepthMap) -> None:
    with atomic_write(path) as fh:
        fh.write(b"Pf\n%d %d\n-1.0\n" % (depth.width, depth.height))
        fh.write(depth.values[::-1].astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# Trajectory CSV
# ---------------------------------------------------------------------------

def load_trajectory(path, reference_index: int | None = None) -> Trajectory:
    """Read camera-to-world poses; the reference defaults to the middle row."""
    path = Path(path)
    poses = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRAJECTORY_COLUMNS:
            raise OSError(
                f"{path}: expected header {','.join(TRAJECTORY_COLUMNS)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 8:
                raise OSError(f"{path}:{lineno}: expected 8 columns, got {len(row)}")
            t, tx, ty, tz, qw, qx, qy, qz = map(float, row)
            norm = math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
            if abs(norm - 1.0) > QUATERNION_NORM_TOL:
                raise OSError(
                    f"{path}:{lineno}: quaternion norm {norm:.6f} too far from 1")
            poses.append(Pose(t, (tx, ty, tz),
                              (qw / norm, qx / norm, qy / norm, qz / norm)))
    if not poses:
        raise OSError(f"{path}: no poses")
    if reference_index is None:
        reference_index = len(poses) // 2
    try:
        return Trajectory(tuple(poses), reference_index)
    except ValueError as exc:
        raise OSError(f"{path}: {exc}") from exc


def save_trajectory(path, traj: Trajectory) -> None:
    with atomic_write(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for pose in traj.poses:
            writer.writerow([repr(pose.time), *map(repr, pose.translation),
                             *map(repr, pose.rotation)])


# ---------------------------------------------------------------------------
# Model config JSON
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    intrinsics: CameraIntrinsics
    blur: BlurConfig
    reference_index: int | None = None


def load_config(path) -> ModelConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
        intrinsics = CameraIntrinsics(
            focal_length=float(raw["focal_length_m"]),
            pixel_pitch_x=float(raw["pixel_pitch_x_m"]),
            pixel_pitch_y=float(raw["pixel_pitch_y_m"]),
            width=int(raw["width"]),
            height=int(raw["height"]),
            principal_point=tuple(raw["principal_point_px"])
            if "principal_point_px" in raw else None,
        )
        blur = BlurConfig(
            n=int(raw.get("n", 1)),
            sigma=float(raw.get("sigma", 4.0)),
            d_min=float(raw["d_min_m"]) if "d_min_m" in raw else None,
            samples=int(raw.get("samples", 64)),
            padding=raw.get("padding", "replicate"),
            rotation_compose=raw.get("rotation_compose", "convolve"),
        )
        ref = raw.get("reference_index")
        return ModelConfig(intrinsics, blur, None if ref is None else int(ref))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise OSError(f"bad config {path}: {exc}") from exc


def save_json(path, payload: dict) -> None:
    with atomic_write(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
