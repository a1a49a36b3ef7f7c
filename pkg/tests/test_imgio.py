import numpy as np
import pytest

from gramtex import imgio as IO


class TestPngRoundTrip:
    def test_byte_representable_exact(self, gen, tmp_path):
        img = gen.integers(0, 256, size=(8, 10, 3)) / 255.0
        path = tmp_path / "img.png"
        IO.save_png(img, path)
        np.testing.assert_array_equal(IO.load_png(path), img)

    def test_clamping(self, tmp_path):
        img = np.zeros((4, 4, 3))
        img[0, 0] = 2.0
        img[1, 1] = -1.0
        path = tmp_path / "img.png"
        IO.save_png(img, path)
        out = IO.load_png(path)
        assert out[0, 0, 0] == 1.0 and out[1, 1, 0] == 0.0

    def test_bad_shape(self, tmp_path):
        with pytest.raises(ValueError, match="HxWx3"):
            IO.save_png(np.zeros((4, 4)), tmp_path / "x.png")


class TestLuminance:
    def test_weights_sum_to_one_on_white(self):
        assert IO.luminance(np.ones((2, 2, 3)))[0, 0] == pytest.approx(1.0)

    def test_green_dominates_blue(self):
        g = np.zeros((1, 1, 3)); g[..., 1] = 1.0
        b = np.zeros((1, 1, 3)); b[..., 2] = 1.0
        assert IO.luminance(g)[0, 0] > IO.luminance(b)[0, 0]

    def test_hand_value(self):
        px = np.array([[[0.5, 0.25, 1.0]]])
        expected = 0.299 * 0.5 + 0.587 * 0.25 + 0.114 * 1.0
        assert IO.luminance(px)[0, 0] == pytest.approx(expected)


class TestResizeBilinear:
    def test_identity(self, gen):
        img = gen.uniform(size=(7, 9, 3))
        np.testing.assert_allclose(IO.resize_bilinear(img, 7, 9), img, atol=1e-12)

    def test_constant_preserved(self):
        img = np.full((6, 6, 3), 0.37)
        np.testing.assert_allclose(IO.resize_bilinear(img, 13, 4), 0.37)

    def test_downsample_2x_of_linear_ramp(self):
        # a linear ramp stays linear under bilinear resampling
        ramp = np.tile(np.arange(8, dtype=np.float64)[None, :, None], (8, 1, 3))
        out = IO.resize_bilinear(ramp, 4, 4)
        np.testing.assert_allclose(out[:, :, 0],
                                   np.tile([0.5, 2.5, 4.5, 6.5], (4, 1)))

    def test_mean_roughly_preserved(self, gen):
        img = gen.uniform(size=(16, 16, 3))
        out = IO.resize_bilinear(img, 8, 8)
        assert abs(out.mean() - img.mean()) < 0.05

    def test_grayscale_input(self, gen):
        img = gen.uniform(size=(6, 6))
        out = IO.resize_bilinear(img, 3, 3)
        assert out.shape == (3, 3)

    def test_invalid_size(self, gen):
        with pytest.raises(ValueError, match="invalid output size"):
            IO.resize_bilinear(gen.uniform(size=(4, 4, 3)), 0, 4)
