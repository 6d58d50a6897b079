import csv

import numpy as np
import pytest

from depthblur.geometry import CameraIntrinsics, blur_variation
from depthblur.harness import (ABLATION_COLUMNS, FIG3_COLUMNS, ablate, fig3_rows,
                               make_ablation_fixtures, write_csv)


class TestFig3:
    def test_variation_curves_respect_upper_bound(self):
        rows = fig3_rows()
        pitch = 4e-6
        for row in rows:
            if row["curve"] != "variation":
                continue
            bound = 3e-3 * 2.8e-3 / (row["d_near_m"] * pitch)
            assert row["value"] < bound

    def test_displacement_inversion_round_trips(self):
        rows = fig3_rows()
        intr = CameraIntrinsics(2.8e-3, 4e-6, 4e-6, 2, 2)
        for row in rows:
            if row["curve"] != "displacement":
                continue
            back = blur_variation(row["value"], intr, row["d_near_m"],
                                  row["delta_d_m"]) / 4e-6
            assert back == pytest.approx(10.0, rel=1e-9)

    def test_far_limit_value(self):
        # d_near=1 m, s=3 mm: the bound s*F/(d*pitch) is 2.1 px.
        rows = [r for r in fig3_rows(d_near_values=(1.0,)) if r["curve"] == "variation"]
        assert rows[-1]["value"] < 2.1
        assert rows[-1]["value"] == pytest.approx(2.1, abs=0.05)

    def test_csv_writable(self, tmp_path):
        rows = fig3_rows(d_near_values=(0.1,))
        path = tmp_path / "fig3.csv"
        write_csv(path, rows, FIG3_COLUMNS)
        with open(path) as fh:
            parsed = list(csv.DictReader(fh))
        assert len(parsed) == len(rows)
        assert parsed[0]["schema_version"] == "1"


@pytest.fixture(scope="module")
def small_sweep():
    fixtures = make_ablation_fixtures(count=2, size=48, seed=0)
    metric, timing = ablate(fixtures, n_values=(1, 3), sigmas=(1.0, 4.0),
                            samples=16)
    return fixtures, metric, timing


class TestAblate:

    def test_rows_cover_grid(self, small_sweep):
        _, metric, timing = small_sweep
        assert len(metric) == 2 * 2 * 2
        assert len(timing) == len(metric)
        assert all(set(ABLATION_COLUMNS) == set(r) for r in metric)

    def test_smaller_n_means_more_layers_and_better_psnr(self, small_sweep):
        _, metric, _ = small_sweep
        by_n = {}
        layers = {}
        for row in metric:
            by_n.setdefault(row["n"], []).append(row["psnr_db"])
            layers.setdefault((row["fixture"], row["n"]), []).append(row["layers"])
        for fixture in (0, 1):
            assert min(layers[(fixture, 1)]) > max(layers[(fixture, 3)])
        assert np.mean(by_n[1]) >= np.mean(by_n[3]) - 0.05

    def test_thread_count_does_not_change_metrics(self, small_sweep):
        fixtures, metric, _ = small_sweep
        metric_mt, _ = ablate(fixtures, n_values=(1, 3), sigmas=(1.0, 4.0),
                              samples=16, threads=2)
        assert metric == metric_mt
