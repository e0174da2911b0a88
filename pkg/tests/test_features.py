import math
from collections import Counter

import numpy as np
import pytest

from oracles import brute_color_counts, brute_pairs, brute_texture, random_images
from puree.features import (FEATURE_NAMES, N_HANDCRAFTED, color_histogram64,
                            descriptive_stats, handcrafted_features, local_entropy_map,
                            local_entropy_summary, luma_brightness, sum_diff_histograms,
                            sum_diff_texture, texture_features, to_gray_levels)


class TestColorHistogram:
    def test_black(self):
        h = color_histogram64(np.zeros((3, 4, 3)))
        assert h[0] == 1.0 and h[1:].sum() == 0

    def test_two_pixel(self):
        p = np.array([[[0.1] * 3, [0.9] * 3]])
        h = color_histogram64(p)
        assert h[0] == 0.5 and h[63] == 0.5

    def test_brute_force_on_random_images(self):
        for p in random_images():
            counts = brute_color_counts(p)
            expected = np.zeros(64)
            for k, c in counts.items():
                expected[k] = c
            assert np.array_equal(np.rint(color_histogram64(p) * 64), expected)

    def test_permutation_invariant(self):
        p = random_images(1, 3)[0]
        flat = p.reshape(-1, 3)[np.random.default_rng(1).permutation(64)].reshape(8, 8, 3)
        assert np.array_equal(color_histogram64(p), color_histogram64(flat))


class TestSumDiff:
    @pytest.mark.parametrize("delta", [(0, 1), (1, 0), (1, 1), (-1, 2)])
    def test_histograms_match_brute_force(self, delta):
        for p in random_images(seed=1):
            gray = to_gray_levels(p)
            hist = sum_diff_histograms(gray, delta)
            sums, diffs = brute_pairs(gray, delta)
            assert hist.n_pairs == sum(sums.values())
            got_s = np.rint(hist.h_s * hist.n_pairs).astype(int)
            got_d = np.rint(hist.h_d * hist.n_pairs).astype(int)
            assert {i: c for i, c in enumerate(got_s) if c} == dict(sums)
            assert {j - 255: c for j, c in enumerate(got_d) if c} == dict(diffs)

    def test_features_match_brute_force(self):
        for p in random_images(seed=2):
            gray = to_gray_levels(p)
            for delta in [(0, 1), (1, 0)]:
                _, feats = sum_diff_texture(gray, delta)
                assert np.allclose(feats.as_array(), brute_texture(*brute_pairs(gray, delta)),
                                   rtol=1e-12, atol=1e-9)

    @pytest.mark.parametrize("k", [0, 17, 255])
    def test_constant_image_closed_forms(self, k):
        _, f = sum_diff_texture(np.full((6, 6), k))
        assert (f.contrast, f.homogeneity, f.energy, f.variance, f.correlation, f.entropy) == (0, 1, 1, 0, 0, 0)
        assert f.mean == k

    def test_checkerboard(self):
        hist, f = sum_diff_texture(np.array([[0, 255], [255, 0]]), (0, 1))
        assert hist.h_d[0] == 0.5 and hist.h_d[510] == 0.5
        assert f.contrast == 65025

    def test_entropy_zero_iff_one_hot(self):
        _, f = sum_diff_texture(np.full((2, 3), 9), (0, 1))
        assert f.entropy == 0
        # constant differences but two distinct sums
        _, g = sum_diff_texture(np.array([[0, 1, 2]]), (0, 1))
        assert g.entropy == pytest.approx(math.log(2))

    def test_empty_overlap(self):
        with pytest.raises(ValueError, match="overlap"):
            sum_diff_histograms(np.zeros((1, 5), dtype=int), (1, 0))


class TestLocalEntropy:
    def test_constant_zero(self):
        assert np.all(local_entropy_map(np.full((12, 12), 7)) == 0)

    def test_two_value_split(self):
        gray = np.zeros((2, 2), dtype=int)
        gray[0] = 200
        # every clipped window covers the whole 2x2 image
        assert np.allclose(local_entropy_map(gray), 1.0)

    def test_bounded_by_support(self):
        gray = to_gray_levels(np.random.default_rng(0).random((20, 20, 3)))
        assert local_entropy_map(gray).max() <= math.log2(81) + 1e-12

    def test_brute_force_clipped_window(self):
        gray = to_gray_levels(np.random.default_rng(4).random((11, 13, 3)) * 0.1)
        emap = local_entropy_map(gray)
        for y, x in [(0, 0), (5, 6), (10, 12), (3, 11)]:
            win = gray[max(0, y - 4):y + 5, max(0, x - 4):x + 5].ravel()
            probs = np.array(list(Counter(win.tolist()).values())) / win.size
            assert emap[y, x] == pytest.approx(-(probs * np.log2(probs)).sum(), abs=1e-12)

    def test_summary(self):
        gray = to_gray_levels(np.random.default_rng(1).random((9, 9, 3)))
        emap, mu, sd = local_entropy_summary(gray)
        assert mu == emap.mean() and sd == emap.std()


class TestLuma:
    def test_white_black(self):
        assert luma_brightness(np.ones((2, 2, 3))) == pytest.approx(1.0)
        assert luma_brightness(np.zeros((2, 2, 3))) == 0.0

    @pytest.mark.parametrize("means, printed", [
        ((0.622, 0.512, 0.449), 0.538),
        ((0.879, 0.861, 0.849), 0.865),
        ((0.992, 0.990, 0.981), 0.99),
    ])
    def test_table_anchors(self, means, printed):
        assert abs(luma_brightness(np.broadcast_to(means, (3, 3, 3))) - printed) <= 0.015

    def test_monotone_per_channel(self):
        p = np.random.default_rng(2).random((5, 5, 3)) * 0.9
        for c in range(3):
            q = p.copy()
            q[..., c] += 0.05
            assert luma_brightness(q) > luma_brightness(p)


class TestHandcrafted:
    def test_layout(self):
        p = random_images(1, 5)[0]
        v = handcrafted_features(p)
        assert v.shape == (N_HANDCRAFTED,) == (len(FEATURE_NAMES),)
        assert v[:64].sum() == pytest.approx(1.0)
        assert np.array_equal(v, handcrafted_features(p))
        assert np.allclose(v[64:], texture_features(p))

    def test_descriptive_stats(self):
        p = np.broadcast_to((0.2, 0.4, 0.6), (9, 9, 3))
        s = descriptive_stats(p)
        assert (s.mean_r, s.mean_g, s.mean_b) == pytest.approx((0.2, 0.4, 0.6))
        assert s.sd_r == pytest.approx(0, abs=1e-12) and s.local_entropy == 0
        assert s.luma == pytest.approx(0.299 * 0.2 + 0.587 * 0.4 + 0.114 * 0.6)
