"""Measurement harnesses: hyperparameter ablation and blur-variation curves.

Reports are CSV only (plotting stays external). Metric rows are fully
deterministic; wall-clock timings go to a separate sidecar so the main
report stays byte-identical across runs.
"""
from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .blur import BlurConfig, build_compositing, icb_forward, pwb_forward
from .geometry import (CameraIntrinsics, blur_variation, displacement_for_variation,
                       resample_trajectory)
from .io import atomic_write
from .metrics import psnr, ssim
from .scenes import SceneFixture, gen_scene

__all__ = [
    "SCHEMA_VERSION",
    "DEFAULT_SIGMAS",
    "make_ablation_fixtures",
    "ablate",
    "write_csv",
    "fig3_rows",
]

SCHEMA_VERSION = 1
DEFAULT_SIGMAS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
ABLATION_COLUMNS = ["schema_version", "fixture", "preset", "n", "sigma",
                    "layers", "psnr_db", "ssim", "kernel_weights", "kernel_bytes"]
TIMING_COLUMNS = ["schema_version", "fixture", "preset", "n", "sigma", "seconds"]
FIG3_COLUMNS = ["schema_version", "curve", "d_near_m", "delta_d_m", "value", "unit"]


def make_ablation_fixtures(count: int = 6, size: int = 96, seed: int = 0):
    """Alternating macro/trucking fixtures with continuous background depth.

    Continuous depth populates every band, so the discretization step n
    actually changes the layer kernels (piecewise-constant scenes would hit
    the band means exactly and hide the n effect).
    """
    fixtures = []
    for i in range(count):
        preset = "macro" if i % 2 == 0 else "trucking"
        fixtures.append(gen_scene(preset, size, seed + i, continuous_depth=True))
    return fixtures


def _sweep_fixture(index: int, fixture: SceneFixture, n_values, sigmas, samples: int):
    traj = resample_trajectory(fixture.trajectory, samples)
    reference = pwb_forward(fixture.sharp, fixture.depth, traj, fixture.intrinsics)
    metric_rows, timing_rows = [], []
    for n in n_values:
        for sigma in sigmas:
            cfg = BlurConfig(n=n, sigma=sigma, samples=samples)
            start = time.perf_counter()
            decomposition, kernels = build_compositing(
                fixture.depth, fixture.trajectory, fixture.intrinsics, cfg)
            blurred = icb_forward(fixture.sharp, kernels, decomposition.mattes)
            elapsed = time.perf_counter() - start
            weight_count = int(sum(k.weights.size for k in kernels))
            metric_rows.append({
                "schema_version": SCHEMA_VERSION,
                "fixture": index,
                "preset": fixture.preset,
                "n": n,
                "sigma": sigma,
                "layers": decomposition.layer_count,
                "psnr_db": round(psnr(blurred, reference), 6),
                "ssim": round(ssim(blurred, reference), 8),
                "kernel_weights": weight_count,
                "kernel_bytes": weight_count * 4,
            })
            timing_rows.append({
                "schema_version": SCHEMA_VERSION,
                "fixture": index,
                "preset": fixture.preset,
                "n": n,
                "sigma": sigma,
                "seconds": elapsed,
            })
    return metric_rows, timing_rows


def ablate(fixtures, n_values=(1, 2, 3), sigmas=DEFAULT_SIGMAS, samples: int = 64,
           threads: int = 1):
    """Sweep (n, sigma) against the pixel-wise reference on every fixture.

    Returns (metric_rows, timing_rows); fixtures are processed in parallel
    but rows come back in fixture order, so the metric report is
    deterministic for any thread count.
    """
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda args: _sweep_fixture(*args),
                [(i, f, n_values, sigmas, samples) for i, f in enumerate(fixtures)]))
    else:
        results = [_sweep_fixture(i, f, n_values, sigmas, samples)
                   for i, f in enumerate(fixtures)]
    metric_rows = [row for metric, _ in results for row in metric]
    timing_rows = [row for _, timing in results for row in timing]
    return metric_rows, timing_rows


def write_csv(path, rows, columns) -> None:
    with atomic_write(path, "w") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def fig3_rows(d_near_values=(0.05, 0.1, 0.5, 1.0, 2.0), s: float = 3e-3,
              delta_t_px: float = 10.0, focal: float = 2.8e-3, pitch: float = 4e-6,
              delta_d_values=None):
    """Blur-variation behavior curves.

    Curve ``variation``: blur variation [px] vs depth difference at fixed
    camera displacement ``s``. Curve ``displacement``: camera displacement
    [m] needed for a fixed ``delta_t_px`` blur variation.
    """
    if delta_d_values is None:
        delta_d_values = np.geomspace(0.01, 100.0, 120)
    intr = CameraIntrinsics(focal, pitch, pitch, 2, 2)
    rows = []
    for d_near in d_near_values:
        variation_px = blur_variation(s, intr, d_near, delta_d_values) / pitch
        displacement = displacement_for_variation(delta_t_px * pitch, intr,
                                                  d_near, delta_d_values)
        for dd, v in zip(delta_d_values, variation_px):
            rows.append({"schema_version": SCHEMA_VERSION, "curve": "variation",
                         "d_near_m": d_near, "delta_d_m": float(dd),
                         "value": float(v), "unit": "px"})
        for dd, v in zip(delta_d_values, displacement):
            rows.append({"schema_version": SCHEMA_VERSION, "curve": "displacement",
                         "d_near_m": d_near, "delta_d_m": float(dd),
                         "value": float(v), "unit": "m"})
    return rows
