import numpy as np
import pytest

from gramtex import datasets as DS
from gramtex import rng as R


class TestRenderTexture:
    def test_shape_and_range(self, gen):
        for kind in DS.TEXTURE_KINDS:
            img = DS.render_texture(kind, 20, 24, gen)
            assert img.shape == (20, 24, 3)
            assert img.min() >= 0.0 and img.max() <= 1.0

    def test_unknown_kind(self, gen):
        with pytest.raises(ValueError, match="unknown texture kind"):
            DS.render_texture("plaid", 16, 16, gen)

    def test_deterministic_from_stream(self):
        a = DS.render_texture("dots", 16, 16, R.stream(3, "x"))
        b = DS.render_texture("dots", 16, 16, R.stream(3, "x"))
        np.testing.assert_array_equal(a, b)

    def test_stripes_vary_horizontally_only(self, gen):
        img = DS.render_texture("stripes", 16, 16, gen, noise=0.0)
        # constant down each column, varying along rows
        assert np.allclose(img, img[0:1, :, :])
        assert img[0].std() > 0.01

    def test_noise_free_checker_is_two_level(self, gen):
        img = DS.render_texture("checker", 16, 16, gen, noise=0.0)
        vals = np.unique(img[:, :, 0].round(6))
        assert len(vals) <= 3  # two plateaus plus possible boundary column


class TestMakeDataset:
    def test_counts_and_labels(self):
        ds = DS.make_dataset(3, base_size=24, crop=16, seed=0)
        assert len(ds) == 3 * len(DS.TEXTURE_KINDS)
        assert ds.class_names == DS.TEXTURE_KINDS
        counts = np.bincount(ds.labels)
        assert (counts == 3).all()

    def test_crop_too_large(self):
        with pytest.raises(ValueError, match="crop"):
            DS.make_dataset(2, base_size=16, crop=20, seed=0)

    def test_deterministic(self):
        a = DS.make_dataset(2, base_size=20, crop=16, seed=9)
        b = DS.make_dataset(2, base_size=20, crop=16, seed=9)
        for x, y in zip(a.images, b.images):
            np.testing.assert_array_equal(x, y)

    def test_kind_subset(self):
        ds = DS.make_dataset(2, base_size=20, crop=16, seed=0,
                             kinds=("stripes", "dots"))
        assert ds.class_names == ("stripes", "dots")
        assert set(ds.labels.tolist()) == {0, 1}


class TestReferenceTextures:
    def test_all_load(self):
        for name in DS.REFERENCE_TEXTURES:
            img = DS.reference_texture(name)
            assert img.ndim == 3 and img.shape[2] == 3
            assert img.shape[0] >= 32 and img.shape[1] >= 32
            assert 0.0 <= img.min() and img.max() <= 1.0
            assert img.std() > 0.01  # not blank

    def test_unknown_name(self):
        with pytest.raises(KeyError, match="unknown reference texture"):
            DS.reference_texture("granite")
