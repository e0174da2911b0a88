import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from puree.imaging import (ImagingError, PatchGridSpec, decompose_patches, downscale_bicubic,
                           read_png, read_raw, unvectorize_patch, vectorize_patch, white_normalize,
                           write_raw)


def rand_image(h, w, seed=0):
    return np.random.default_rng(seed).random((h, w, 3))


class TestWhiteNormalize:
    def test_identity_when_white_is_one(self):
        img = rand_image(6, 8)
        img[:2, :2] = 1.0
        assert np.array_equal(white_normalize(img, (0, 0, 2, 2)), img)

    def test_hand_division_and_clamp(self):
        img = np.full((3, 3, 3), 0.25)
        img[0, 0] = 0.5
        img[2, 2, 0] = 0.8
        out = white_normalize(img, (0, 0, 1, 1))
        assert out[1, 1].tolist() == [0.5, 0.5, 0.5]
        assert out[2, 2, 0] == 1.0

    def test_idempotent(self):
        img = rand_image(10, 10, 1) * 0.8
        img[:3, :3] = 0.8
        once = white_normalize(img, (0, 0, 3, 3))
        assert np.allclose(white_normalize(once, (0, 0, 3, 3)), once, atol=1e-15)

    def test_zero_region(self):
        with pytest.raises(ImagingError, match="zero"):
            white_normalize(np.zeros((4, 4, 3)), (0, 0, 2, 2))

    def test_region_outside(self):
        with pytest.raises(ImagingError):
            white_normalize(np.ones((4, 4, 3)), (3, 3, 2, 2))


class TestDecompose:
    def test_window_equals_image(self):
        img = rand_image(5, 7)
        patches = decompose_patches(img, PatchGridSpec(5, 7, 5, 7))
        assert len(patches) == 1 and np.array_equal(patches[0], img)

    def test_four_by_four_stride_one(self):
        assert len(decompose_patches(rand_image(4, 4), PatchGridSpec(2, 2, 1, 1))) == 9

    def test_default_grid_gives_nine_in_order(self):
        img = rand_image(100, 200)
        grid = PatchGridSpec()
        patches = decompose_patches(img, grid)
        assert len(patches) == 9 == grid.count(100, 200)
        offsets = [(y, x) for y in (0, 25, 50) for x in (0, 50, 100)]
        for p, (y, x) in zip(patches, offsets):
            assert np.array_equal(p, img[y:y + 50, x:x + 100])

    def test_half_overlap(self):
        assert PatchGridSpec.half_overlap(50, 100) == PatchGridSpec()

    def test_window_too_large(self):
        with pytest.raises(ImagingError):
            decompose_patches(rand_image(4, 4), PatchGridSpec(5, 2, 1, 1))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 12), st.data())
    def test_count_matches_enumeration(self, H, W, data):
        wh = data.draw(st.integers(1, H))
        ww = data.draw(st.integers(1, W))
        sh = data.draw(st.integers(1, wh))
        sw = data.draw(st.integers(1, ww))
        grid = PatchGridSpec(wh, ww, sh, sw)
        brute = sum(1 for y in range(H) for x in range(W)
                    if y % sh == 0 and x % sw == 0 and y + wh <= H and x + ww <= W)
        assert grid.count(H, W) == brute == len(decompose_patches(np.zeros((H, W, 3)), grid))


class TestBicubic:
    def test_constant_exact(self):
        out = downscale_bicubic(np.full((50, 100, 3), 0.37))
        assert out.shape == (25, 50, 3)
        assert np.all(out == out[0, 0, 0]) and out[0, 0, 0] == pytest.approx(0.37, abs=1e-15)

    def test_ramp_against_hand_kernel(self):
        # taps at distances 1.5, 0.5, 0.5, 1.5 weigh -1/16, 9/16, 9/16, -1/16 (a = -0.5)
        ramp = np.arange(8) / 7
        img = np.repeat(np.repeat(ramp[None, :, None], 2, axis=0), 3, axis=2)
        out = downscale_bicubic(img)
        expected = [7 / 112, 40 / 112, 72 / 112, 105 / 112]
        assert out.shape == (1, 4, 3)
        assert np.allclose(out[0, :, 0], expected, atol=1e-6)

    def test_direct_kernel_sum_oracle(self):
        def kernel(t, a=-0.5):
            t = abs(t)
            if t <= 1:
                return (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1
            if t < 2:
                return a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a
            return 0.0

        row = np.random.default_rng(3).random(10)
        out = downscale_bicubic(np.repeat(row[None, :, None], 2, axis=0).repeat(3, axis=2))[0, :, 0]
        for j, v in enumerate(out):
            src = 2 * j + 0.5
            acc = sum(kernel(src - i) * row[min(max(i, 0), 9)] for i in range(int(np.floor(src)) - 1, int(np.floor(src)) + 3))
            assert v == pytest.approx(min(max(acc, 0), 1), abs=1e-12)

    def test_output_in_unit_range(self):
        img = (np.indices((40, 40)).sum(axis=0) % 2).astype(float)[..., None].repeat(3, axis=2)
        out = downscale_bicubic(img)
        assert out.min() >= 0 and out.max() <= 1

    def test_odd_dimension(self):
        with pytest.raises(ImagingError):
            downscale_bicubic(np.zeros((5, 4, 3)))


class TestVectorize:
    def test_layout(self):
        p = np.zeros((25, 50, 3))
        p[0, 0] = (0.1, 0.2, 0.3)
        p[0, 1, 0] = 0.9
        v = vectorize_patch(p)
        assert v.shape == (3750,)
        assert (v[0], v[1], v[1250], v[2500]) == (0.1, 0.9, 0.2, 0.3)

    def test_round_trip(self):
        p = rand_image(25, 50, 4)
        assert np.array_equal(unvectorize_patch(vectorize_patch(p)), p)

    def test_wrong_dims(self):
        with pytest.raises(ImagingError):
            vectorize_patch(np.zeros((25, 49, 3)))
        with pytest.raises(ImagingError):
            unvectorize_patch(np.zeros(3749))


class TestFiles:
    def test_raw_round_trip(self, tmp_path):
        p = rand_image(25, 50, 5).astype(np.float32).astype(float)
        write_raw(tmp_path / "a.raw", p)
        assert np.array_equal(read_raw(tmp_path / "a.raw"), p)
        assert (tmp_path / "a.raw").stat().st_size == 16 + 4 * 3750

    def test_raw_truncated(self, tmp_path):
        write_raw(tmp_path / "a.raw", rand_image(2, 2))
        data = (tmp_path / "a.raw").read_bytes()
        (tmp_path / "b.raw").write_bytes(data[:-1])
        with pytest.raises(ImagingError, match="expected"):
            read_raw(tmp_path / "b.raw")

    def test_png(self, tmp_path):
        from PIL import Image

        arr = np.random.default_rng(0).integers(0, 256, (4, 5, 3), dtype=np.uint8)
        Image.fromarray(arr).save(tmp_path / "x.png")
        assert np.array_equal(read_png(tmp_path / "x.png"), arr / 255.0)
