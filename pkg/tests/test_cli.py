import json
import math
from pathlib import Path

import numpy as np
import pytest

from depthblur.cli import main
from depthblur.io import load_image, save_json


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert main(["gen-scene", "--preset", "macro", "--size", "48",
                 "--objects", "1", "--seed", "5", "--out-dir", str(out)]) == 0
    return out


def scene_args(scene_dir):
    return ["--image", str(scene_dir / "sharp.png"),
            "--depth", str(scene_dir / "depth.pfm"),
            "--trajectory", str(scene_dir / "trajectory.csv"),
            "--config", str(scene_dir / "config.json")]


class TestGenScene:
    def test_writes_fixture_bundle(self, scene_dir):
        for name in ("sharp.png", "depth.pfm", "trajectory.csv", "config.json"):
            assert (scene_dir / name).exists()
        cfg = json.loads((scene_dir / "config.json").read_text())
        assert cfg["focal_length_m"] == pytest.approx(2.8e-3)

    def test_deterministic_bytes(self, tmp_path):
        dirs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["gen-scene", "--preset", "trucking", "--size", "48",
                         "--seed", "3", "--out-dir", str(out)]) == 0
            dirs.append(out)
        for name in ("sharp.png", "depth.pfm", "trajectory.csv", "config.json"):
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


class TestBlurCommand:
    def test_icb_blur_with_layer_dump(self, scene_dir, tmp_path):
        out = tmp_path / "blur.png"
        layer_dir = tmp_path / "layers"
        assert main(["blur", *scene_args(scene_dir), "--model", "icb",
                     "--out", str(out), "--dump-layers", str(layer_dir)]) == 0
        assert out.exists()
        sidecar = json.loads((layer_dir / "layers.json").read_text())
        count = len(sidecar["band_edges_m"])
        assert len(sidecar["optimal_depths_m"]) == count
        for l in range(count):
            assert (layer_dir / f"matte_{l:03d}.png").exists()

    def test_pwb_blur_and_determinism(self, scene_dir, tmp_path):
        outs = []
        for name in ("a.png", "b.png"):
            out = tmp_path / name
            assert main(["blur", *scene_args(scene_dir), "--model", "pwb",
                         "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_blur_models_agree_on_far_scene(self, tmp_path):
        gen = tmp_path / "standard"
        assert main(["gen-scene", "--preset", "standard", "--size", "48",
                     "--seed", "2", "--out-dir", str(gen)]) == 0
        icb_out, pwb_out = tmp_path / "icb.png", tmp_path / "pwb.png"
        base = scene_args(gen)
        assert main(["blur", *base, "--model", "icb", "--out", str(icb_out)]) == 0
        assert main(["blur", *base, "--model", "pwb", "--out", str(pwb_out)]) == 0
        assert icb_out.read_bytes() == pwb_out.read_bytes()

    def test_missing_input_exits_2(self, scene_dir, tmp_path):
        args = scene_args(scene_dir)
        args[1] = str(tmp_path / "missing.png")
        assert main(["blur", *args, "--out", str(tmp_path / "x.png")]) == 2


class TestEvalCommand:
    def test_report(self, scene_dir, tmp_path):
        blurred = tmp_path / "blurred.png"
        assert main(["blur", *scene_args(scene_dir), "--out", str(blurred)]) == 0
        report = tmp_path / "report.json"
        assert main(["eval", "--pred", str(blurred),
                     "--ref", str(scene_dir / "sharp.png"),
                     "--metrics", "psnr,ssim", "--out", str(report)]) == 0
        data = json.loads(report.read_text())
        assert set(data) == {"schema_version", "psnr_db", "ssim"}
        assert 5.0 < data["psnr_db"] < 99.0
        assert -1.0 <= data["ssim"] <= 1.0

    def test_identical_images_hit_cap(self, scene_dir, tmp_path):
        report = tmp_path / "self.json"
        sharp = str(scene_dir / "sharp.png")
        assert main(["eval", "--pred", sharp, "--ref", sharp,
                     "--metrics", "psnr", "--out", str(report)]) == 0
        assert json.loads(report.read_text())["psnr_db"] == 99.0

    def test_unknown_metric_exits_2(self, scene_dir, tmp_path):
        sharp = str(scene_dir / "sharp.png")
        assert main(["eval", "--pred", sharp, "--ref", sharp,
                     "--metrics", "lpips", "--out", str(tmp_path / "r.json")]) == 2


class TestLayersAndKernels:
    def test_layers_command(self, scene_dir, tmp_path):
        out = tmp_path / "layers"
        args = scene_args(scene_dir)
        del args[0:2]  # layers takes no --image
        assert main(["layers", *args, "--out-dir", str(out)]) == 0
        assert (out / "layers.json").exists()

    def test_kernel_dump_single_depth(self, scene_dir, tmp_path):
        out = tmp_path / "k"
        assert main(["kernel-dump", "--trajectory", str(scene_dir / "trajectory.csv"),
                     "--config", str(scene_dir / "config.json"),
                     "--depth-m", "0.08", "--out-dir", str(out)]) == 0
        data = json.loads((out / "kernel.json").read_text())
        weights = np.array(data["weights"]).reshape(data["height"], data["width"])
        assert weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert (out / "kernel.png").exists()

    def test_kernel_dump_layers(self, scene_dir, tmp_path):
        out = tmp_path / "ks"
        assert main(["kernel-dump", "--trajectory", str(scene_dir / "trajectory.csv"),
                     "--config", str(scene_dir / "config.json"),
                     "--depth", str(scene_dir / "depth.pfm"),
                     "--out-dir", str(out)]) == 0
        assert (out / "kernel_000.json").exists()

    def test_kernel_dump_needs_depth(self, scene_dir, tmp_path):
        assert main(["kernel-dump", "--trajectory", str(scene_dir / "trajectory.csv"),
                     "--config", str(scene_dir / "config.json"),
                     "--out-dir", str(tmp_path / "x")]) == 2


class TestDeblurCommand:
    def test_short_fit_runs_and_writes_outputs(self, scene_dir, tmp_path):
        blurred = tmp_path / "blurred.png"
        assert main(["blur", *scene_args(scene_dir), "--out", str(blurred)]) == 0
        fit_cfg = tmp_path / "fit.json"
        save_json(fit_cfg, {"iterations": 8, "hidden_features": 16,
                            "hidden_layers": 2, "seed": 1})
        out = tmp_path / "sharp.png"
        trace = tmp_path / "trace.csv"
        ckpt = tmp_path / "net.bin"
        args = scene_args(scene_dir)
        args[1] = str(blurred)
        assert main(["deblur", *args, "--fit-config", str(fit_cfg),
                     "--out", str(out), "--trace", str(trace),
                     "--checkpoint", str(ckpt)]) == 0
        assert out.exists() and ckpt.exists()
        lines = trace.read_text().splitlines()
        assert lines[0] == "schema_version,iteration,loss"
        assert len(lines) == 9

    def test_deblur_deterministic(self, scene_dir, tmp_path):
        blurred = tmp_path / "blurred.png"
        assert main(["blur", *scene_args(scene_dir), "--out", str(blurred)]) == 0
        fit_cfg = tmp_path / "fit.json"
        save_json(fit_cfg, {"iterations": 6, "hidden_features": 16,
                            "hidden_layers": 2, "seed": 3})
        args = scene_args(scene_dir)
        args[1] = str(blurred)
        outs = []
        for name in ("r1.png", "r2.png"):
            out = tmp_path / name
            assert main(["deblur", *args, "--fit-config", str(fit_cfg),
                         "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestFig3Command:
    def test_deterministic_csv(self, tmp_path):
        outs = []
        for name in ("f1.csv", "f2.csv"):
            out = tmp_path / name
            assert main(["fig3", "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        header = outs[0].decode().splitlines()[0]
        assert header == "schema_version,curve,d_near_m,delta_d_m,value,unit"


class TestAblateCommand:
    def test_metrics_deterministic_across_threads(self, tmp_path):
        csvs = []
        for threads, name in ((1, "m1.csv"), (2, "m2.csv")):
            out = tmp_path / name
            timing = tmp_path / f"t{threads}.csv"
            assert main(["ablate", "--fixtures", "2", "--size", "48",
                         "--n-values", "1,2", "--sigmas", "4.0",
                         "--seed", "0", "--threads", str(threads),
                         "--out", str(out), "--timing-out", str(timing)]) == 0
            csvs.append(out.read_bytes())
            assert timing.exists()
        assert csvs[0] == csvs[1]
