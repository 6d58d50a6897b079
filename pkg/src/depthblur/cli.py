"""Command-line interface.

Exit codes: 0 success, 2 bad input (unreadable files, bad formats or
arguments), 3 numerical failure (diverged optimization).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .blur import Image, build_compositing, icb_forward, pwb_forward
from .geometry import resample_trajectory
from .harness import (ABLATION_COLUMNS, DEFAULT_SIGMAS, FIG3_COLUMNS, SCHEMA_VERSION,
                      TIMING_COLUMNS, ablate, fig3_rows, make_ablation_fixtures,
                      write_csv)
from .io import (ModelConfig, atomic_write, load_config, load_depth, load_image,
                 load_trajectory, save_depth, save_image, save_json, save_trajectory)
from .kernels import BlurKernel, PixelwiseKernelField, epdf_kernel, pixel_displacements
from .metrics import psnr, ssim
from .neural import (CompositeBlurOperator, FitConfig, FitDivergenceError,
                     PixelwiseBlurOperator, fit_operator, render, save_network)
from .scenes import gen_scene

log = logging.getLogger("depthblur")


def _positive_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="random seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")


def _save_kernel_json(path, kernel: BlurKernel) -> None:
    save_json(path, {
        "schema_version": SCHEMA_VERSION,
        "width": kernel.weights.shape[1],
        "height": kernel.weights.shape[0],
        "anchor": list(kernel.anchor),
        "weights": [float(w) for w in kernel.weights.ravel()],
    })


def _save_kernel_png(path, kernel: BlurKernel) -> None:
    peak = kernel.weights.max()
    norm = kernel.weights / peak if peak > 0 else kernel.weights
    save_image(path, Image(norm.astype(np.float32)))


def _dump_layers(out_dir, decomposition, kernels) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for l in range(decomposition.layer_count):
        save_image(out_dir / f"matte_{l:03d}.png", Image(decomposition.mattes[l]))
        save_image(out_dir / f"mask_{l:03d}.png", Image(decomposition.extended_masks[l]))
        save_image(out_dir / f"zbuffer_{l:03d}.png", Image(decomposition.zbuffers[l]))
    save_json(out_dir / "layers.json", {
        "schema_version": SCHEMA_VERSION,
        "band_edges_m": [float(v) for v in decomposition.sequence.values],
        "optimal_depths_m": [float(v) for v in decomposition.optimal_depths],
        "n": decomposition.sequence.n,
        "layer_supports": [list(k.symmetric_support()) for k in kernels],
    })


def _load_scene(args) -> tuple:
    cfg = load_config(args.config)
    depth = load_depth(args.depth)
    traj = load_trajectory(args.trajectory)
    return cfg, depth, traj


def _cmd_blur(args) -> int:
    cfg, depth, traj = _load_scene(args)
    image = load_image(args.image)
    if args.model == "icb":
        decomposition, kernels = build_compositing(depth, traj, cfg.intrinsics,
                                                   cfg.blur, cfg.reference_index)
        blurred = icb_forward(image, kernels, decomposition.mattes, cfg.blur.padding)
        if args.dump_layers:
            _dump_layers(args.dump_layers, decomposition, kernels)
    else:
        if args.dump_layers:
            raise ValueError("--dump-layers requires --model icb")
        traj_r = resample_trajectory(traj, cfg.blur.samples, cfg.reference_index)
        if args.materialize:
            field = PixelwiseKernelField(traj_r, cfg.intrinsics, depth)
            kernels = field.materialize()
            log.info("materialized %d per-pixel kernels holding %d weights",
                     len(kernels), sum(k.weights.size for k in kernels))
        blurred = pwb_forward(image, depth, traj_r, cfg.intrinsics)
    save_image(args.out, blurred)
    return 0


def _cmd_deblur(args) -> int:
    cfg, depth, traj = _load_scene(args)
    observed = load_image(args.image)
    fit_cfg = _load_fit_config(args.fit_config, args.seed)
    if args.model == "icb":
        decomposition, kernels = build_compositing(depth, traj, cfg.intrinsics,
                                                   cfg.blur, cfg.reference_index)
        operator = CompositeBlurOperator(kernels, decomposition.mattes, cfg.blur.padding)
    else:
        traj_r = resample_trajectory(traj, cfg.blur.samples, cfg.reference_index)
        operator = PixelwiseBlurOperator(traj_r, cfg.intrinsics, depth)
    net, trace = fit_operator(observed, operator, fit_cfg)
    recovered = render(net, observed.width, observed.height)
    save_image(args.out, Image(np.clip(recovered.values, 0.0, 1.0)))
    if args.trace:
        rows = [{"schema_version": SCHEMA_VERSION, "iteration": i,
                 "loss": repr(loss)} for i, loss in enumerate(trace)]
        write_csv(args.trace, rows, ["schema_version", "iteration", "loss"])
    if args.checkpoint:
        with atomic_write(args.checkpoint) as fh:
            save_network(net, fh)
    return 0


def _load_fit_config(path, seed_override) -> FitConfig:
    raw = {}
    if path:
        with open(path) as fh:
            raw = json.load(fh)
    seed = seed_override if seed_override is not None else int(raw.get("seed", 0))
    try:
        return FitConfig(
            iterations=int(raw.get("iterations", 400)),
            learning_rate=float(raw.get("learning_rate", 5e-4)),
            lr_min=float(raw.get("lr_min", 5e-6)),
            tv_weight=float(raw.get("lambda", raw.get("tv_weight", 8e-6))),
            grad_clip_norm=float(raw.get("grad_clip_norm", 1.0)),
            seed=seed,
            hidden_features=int(raw.get("hidden_features", 192)),
            hidden_layers=int(raw.get("hidden_layers", 4)),
        )
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad fit config {path}: {exc}") from exc


def _cmd_eval(args) -> int:
    pred = load_image(args.pred)
    ref = load_image(args.ref)
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    report = {"schema_version": SCHEMA_VERSION}
    for name in wanted:
        if name == "psnr":
            report["psnr_db"] = psnr(pred, ref)
        elif name == "ssim":
            report["ssim"] = ssim(pred, ref)
        else:
            raise ValueError(f"unknown metric {name!r} (expected psnr and/or ssim)")
    save_json(args.out, report)
    return 0


def _cmd_gen_scene(args) -> int:
    seed = args.seed if args.seed is not None else 0
    fixture = gen_scene(args.preset, args.size, seed, objects=args.objects,
                        continuous_depth=args.continuous_depth)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_image(out_dir / "sharp.png", fixture.sharp)
    save_depth(out_dir / "depth.pfm", fixture.depth)
    save_trajectory(out_dir / "trajectory.csv", fixture.trajectory)
    intr = fixture.intrinsics
    save_json(out_dir / "config.json", {
        "focal_length_m": intr.focal_length,
        "pixel_pitch_x_m": intr.pixel_pitch_x,
        "pixel_pitch_y_m": intr.pixel_pitch_y,
        "width": intr.width,
        "height": intr.height,
        "principal_point_px": list(intr.principal_point),
        "n": 1,
        "sigma": 4.0,
        "samples": 64,
        "preset": fixture.preset,
        "seed": seed,
        "schema_version": SCHEMA_VERSION,
    })
    return 0


def _cmd_layers(args) -> int:
    cfg, depth, traj = _load_scene(args)
    decomposition, kernels = build_compositing(depth, traj, cfg.intrinsics,
                                               cfg.blur, cfg.reference_index)
    _dump_layers(args.out_dir, decomposition, kernels)
    return 0


def _cmd_ablate(args) -> int:
    seed = args.seed if args.seed is not None else 0
    fixtures = make_ablation_fixtures(args.fixtures, args.size, seed)
    metric_rows, timing_rows = ablate(fixtures, tuple(args.n_values),
                                      tuple(args.sigmas), threads=args.threads)
    write_csv(args.out, metric_rows, ABLATION_COLUMNS)
    write_csv(args.timing_out, timing_rows, TIMING_COLUMNS)
    return 0


def _cmd_fig3(args) -> int:
    rows = fig3_rows(tuple(args.d_near), s=args.s_mm * 1e-3,
                     delta_t_px=args.delta_t_px)
    write_csv(args.out, rows, FIG3_COLUMNS)
    return 0


def _cmd_kernel_dump(args) -> int:
    cfg = load_config(args.config)
    traj = load_trajectory(args.trajectory)
    traj_r = resample_trajectory(traj, cfg.blur.samples, cfg.reference_index)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.depth_m is not None:
        kernel = epdf_kernel(pixel_displacements(traj_r, cfg.intrinsics, args.depth_m))
        _save_kernel_json(out_dir / "kernel.json", kernel)
        _save_kernel_png(out_dir / "kernel.png", kernel)
        return 0
    if not args.depth:
        raise ValueError("provide --depth-m or --depth")
    depth = load_depth(args.depth)
    _, kernels = build_compositing(depth, traj, cfg.intrinsics, cfg.blur,
                                   cfg.reference_index)
    for l, kernel in enumerate(kernels):
        _save_kernel_json(out_dir / f"kernel_{l:03d}.json", kernel)
        _save_kernel_png(out_dir / f"kernel_{l:03d}.png", kernel)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthblur",
        description="Depth-aware parallax motion-blur synthesis and neural deblurring")
    parser.add_argument("--version", action="version", version=f"depthblur {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("blur", help="synthesize motion blur from a sharp image")
    p.add_argument("--image", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--model", choices=("icb", "pwb"), default="icb")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-layers", metavar="DIR")
    p.add_argument("--materialize", action="store_true",
                   help="materialize the per-pixel kernel field first (pwb)")
    _add_common(p)
    p.set_defaults(func=_cmd_blur)

    p = sub.add_parser("deblur", help="recover a sharp image through the blur model")
    p.add_argument("--image", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--fit-config")
    p.add_argument("--model", choices=("icb", "pwb"), default="icb")
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.add_argument("--checkpoint")
    _add_common(p)
    p.set_defaults(func=_cmd_deblur)

    p = sub.add_parser("eval", help="image-quality metrics between two images")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--metrics", default="psnr,ssim")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gen-scene", help="generate a procedural scene fixture")
    p.add_argument("--preset", choices=("macro", "trucking", "standard"), required=True)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--objects", type=int, default=3)
    p.add_argument("--continuous-depth", action="store_true")
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_gen_scene)

    p = sub.add_parser("layers", help="dump mattes, masks, z-buffers, and band data")
    p.add_argument("--depth", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_layers)

    p = sub.add_parser("ablate", help="sweep n and sigma against the pixel-wise oracle")
    p.add_argument("--fixtures", type=int, default=6)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--n-values", type=_positive_int_list, default=[1, 2, 3])
    p.add_argument("--sigmas", type=_float_list, default=list(DEFAULT_SIGMAS))
    p.add_argument("--out", required=True)
    p.add_argument("--timing-out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("fig3", help="emit blur-variation behavior curves as CSV")
    p.add_argument("--d-near", type=_float_list, default=[0.05, 0.1, 0.5, 1.0, 2.0])
    p.add_argument("--s-mm", type=float, default=3.0)
    p.add_argument("--delta-t-px", type=float, default=10.0)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_fig3)

    p = sub.add_parser("kernel-dump", help="export blur kernels as JSON and PNG")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--depth-m", type=float, default=None,
                   help="single depth in meters (one kernel)")
    p.add_argument("--depth", help="PFM depth map (per-layer kernels)")
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_kernel_dump)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False)
                        else logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except FitDivergenceError as exc:
        print(f"depthblur: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError, KeyError) as exc:
        print(f"depthblur: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
