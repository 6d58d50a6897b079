import numpy as np
import pytest

from depthblur.geometry import DepthSequence, depth_sequence_1d
from depthblur.layering import (DepthMap, alpha_mattes, assign_regions, decompose,
                                extend_region, optimal_layer_depths, z_buffers)

import oracles
from conftest import FOCAL, PITCH


SEQ = DepthSequence((4.2, 1.4, 0.84), 1, 2.1, 2.1)


def random_sequence(rng, max_layers=8):
    n = int(rng.integers(1, 4))
    s_max = rng.uniform(2e-4, 5e-3)
    kappa = s_max * FOCAL / PITCH
    layers = int(rng.integers(2, max_layers + 1))
    values = tuple(2 * kappa / (2 * l * n + 1) for l in range(layers))
    return DepthSequence(values, n, kappa, kappa)


class TestAssignRegions:
    def test_beyond_static_edge_is_layer_zero(self):
        depth = DepthMap(np.full((4, 4), 5.0, dtype=np.float32))
        np.testing.assert_array_equal(assign_regions(depth, SEQ), 0)

    def test_band_lookup(self):
        labels = assign_regions(np.array([[1.0]]), SEQ)
        assert labels[0, 0] == 2  # 0.84 <= 1.0 < 1.4

    def test_below_minimum_clamps(self):
        labels = assign_regions(np.array([[0.5]]), SEQ)
        assert labels[0, 0] == 2

    def test_exact_edge_belongs_to_its_layer(self):
        labels = assign_regions(np.array([4.2, 1.4, 0.84])[None, :], SEQ)
        np.testing.assert_array_equal(labels[0], [0, 1, 2])

    def test_static_sequence_single_layer(self):
        seq = depth_sequence_1d(0.0, FOCAL, PITCH, 1, 0.5)
        labels = assign_regions(np.array([[0.1, 100.0]]), seq)
        np.testing.assert_array_equal(labels, 0)

    def test_deterministic_and_exhaustive(self):
        rng = np.random.default_rng(0)
        depth = rng.uniform(0.2, 6.0, size=(32, 32)).astype(np.float32)
        a = assign_regions(depth, SEQ)
        b = assign_regions(depth.copy(), SEQ)
        np.testing.assert_array_equal(a, b)
        assert a.min() >= 0 and a.max() <= len(SEQ) - 1


class TestExtendRegion:
    def test_all_ones_stays_all_ones(self):
        out = extend_region(np.ones((7, 9), dtype=bool), (5, 3), 4.0)
        np.testing.assert_allclose(out, 1.0, atol=1e-7)

    def test_empty_stays_empty(self):
        out = extend_region(np.zeros((5, 5), dtype=bool), (3, 3), 2.0)
        np.testing.assert_array_equal(out, 0.0)

    def test_single_pixel_blob_matches_bruteforce(self):
        mask = np.zeros((9, 9), dtype=bool)
        mask[4, 4] = True
        out = extend_region(mask, (3, 3), 4.0)
        dilated = oracles.dilate_rect(mask, 3, 3)
        expected = oracles.gaussian_smooth_direct(dilated.astype(float), 3, 3, 4.0)
        np.testing.assert_allclose(out, np.clip(expected, 0, 1), atol=1e-7)
        # 5x5 bounded, symmetric center row/column
        assert np.all(out[:2] == 0) and np.all(out[7:] == 0)
        np.testing.assert_allclose(out[4], out[4][::-1], atol=1e-7)
        np.testing.assert_allclose(out[:, 4], out[::-1, 4], atol=1e-7)

    def test_support_containment(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            mask = rng.random((16, 16)) < 0.1
            sx, sy = 2 * rng.integers(0, 3) + 1, 2 * rng.integers(0, 3) + 1
            out = extend_region(mask, (int(sx), int(sy)), 4.0)
            reach_x, reach_y = int(sx) - 1, int(sy) - 1
            envelope = oracles.dilate_rect(mask, 2 * reach_x + 1, 2 * reach_y + 1)
            assert np.all(out[~envelope] == 0)

    def test_positive_on_original_mask(self):
        rng = np.random.default_rng(3)
        mask = rng.random((12, 12)) < 0.2
        out = extend_region(mask, (5, 5), 0.5)
        assert np.all(out[mask] > 0)

    def test_even_support_rejected(self):
        with pytest.raises(ValueError):
            extend_region(np.ones((4, 4), dtype=bool), (2, 3), 4.0)
        with pytest.raises(ValueError):
            extend_region(np.ones((4, 4), dtype=bool), (3, 3), 0.0)


class TestZBuffersAndMattes:
    def test_single_layer(self):
        masks = [np.full((3, 3), 0.7, dtype=np.float32)]
        zb = z_buffers(masks)
        np.testing.assert_array_equal(zb[0], 1.0)
        mattes = alpha_mattes(masks, zb)
        np.testing.assert_allclose(mattes[0], 1.0, atol=1e-7)

    def test_full_near_layer_occludes(self):
        masks = [np.ones((2, 2)), np.ones((2, 2))]
        zb = z_buffers(masks)
        np.testing.assert_array_equal(zb[0], 0.0)
        mattes = alpha_mattes(masks, zb)
        np.testing.assert_array_equal(mattes[0], 0.0)
        np.testing.assert_array_equal(mattes[1], 1.0)

    def test_three_layer_products(self):
        masks = [np.full((1, 1), 1.0), np.full((1, 1), 0.5), np.full((1, 1), 0.5)]
        zb = z_buffers(masks)
        assert zb[0][0, 0] == pytest.approx(0.25)
        assert zb[1][0, 0] == pytest.approx(0.5)
        assert zb[2][0, 0] == pytest.approx(1.0)

    def test_occlusion_ordering_antitone(self):
        rng = np.random.default_rng(4)
        masks = [rng.random((6, 6)).astype(np.float32) for _ in range(4)]
        zb = z_buffers(masks)
        bumped = [m.copy() for m in masks]
        bumped[2] = np.clip(bumped[2] + rng.random((6, 6)) * 0.3, 0, 1).astype(np.float32)
        zb2 = z_buffers(bumped)
        for l in range(2):  # layers farther than the bumped one
            assert np.all(zb2[l] <= zb[l] + 1e-7)
        np.testing.assert_array_equal(zb2[3], zb[3])

    def test_partition_of_unity_random(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            seq = random_sequence(rng)
            low = seq.values[-1] * rng.uniform(0.3, 1.0)
            depth = rng.uniform(low, seq.values[0] * 1.5,
                                size=(16, 16)).astype(np.float32)
            supports = [(int(2 * rng.integers(0, 4) + 1), int(2 * rng.integers(0, 4) + 1))
                        for _ in range(len(seq))]
            dec = decompose(DepthMap(depth), seq, supports, rng.uniform(0.5, 4.0))
            total = np.zeros((16, 16), dtype=np.float64)
            for matte in dec.mattes:
                total += matte
            assert np.max(np.abs(total - 1.0)) <= 1e-6
            norm = sum(np.asarray(r, dtype=np.float64) * np.asarray(m, dtype=np.float64)
                       for r, m in zip(dec.extended_masks, dec.zbuffers))
            assert np.all(norm > 0)


class TestOptimalDepths:
    def test_mean_of_two(self):
        depth = np.array([[1.0, 1.2], [5.0, 5.0]], dtype=np.float32)
        labels = assign_regions(depth, SEQ)
        out = optimal_layer_depths(depth, labels, SEQ)
        assert out[2] == pytest.approx(1.1, rel=1e-6)
        assert out[0] == pytest.approx(5.0, rel=1e-6)

    def test_single_pixel_layer(self):
        depth = np.array([[5.0, 5.0], [5.0, 1.0]], dtype=np.float32)
        labels = assign_regions(depth, SEQ)
        out = optimal_layer_depths(depth, labels, SEQ)
        assert out[2] == pytest.approx(1.0, rel=1e-6)

    def test_empty_band_midpoint(self):
        depth = np.array([[5.0]], dtype=np.float32)
        labels = assign_regions(depth, SEQ)
        out = optimal_layer_depths(depth, labels, SEQ)
        assert out[0] == pytest.approx(5.0)
        assert out[1] == pytest.approx((1.4 + 4.2) / 2)
        assert out[2] == pytest.approx((0.84 + 1.4) / 2)

    def test_mean_minimizes_squared_error(self):
        rng = np.random.default_rng(11)
        samples = rng.uniform(0.84, 1.4, size=100)
        depth = samples.reshape(10, 10).astype(np.float32)
        labels = assign_regions(depth, SEQ)
        assert np.all(labels == 2)
        star = optimal_layer_depths(depth, labels, SEQ)[2]
        depth64 = depth.astype(np.float64)
        best = np.sum((depth64 - star) ** 2)
        for candidate in np.linspace(0.84, 1.4, 201):
            assert best <= np.sum((depth64 - candidate) ** 2) + 1e-9


class TestDepthMap:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            DepthMap(np.array([[1.0, -2.0]], dtype=np.float32))
        with pytest.raises(ValueError):
            DepthMap(np.array([[np.nan, 1.0]], dtype=np.float32))

    def test_shape_properties(self):
        d = DepthMap(np.ones((3, 5), dtype=np.float32))
        assert (d.width, d.height) == (5, 3)
