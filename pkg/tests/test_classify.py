import numpy as np
import pytest

from gramtex import classify as CL
from gramtex import datasets as DS
from gramtex import network as NET
from gramtex import rng as R
from gramtex.tensor_ops import ShapeError, finite_diff_check


def clustered_features(gen, n_per=10, d=6, spread=0.05):
    """Well-separated Gaussian clusters: a classification oracle where the
    right answer (100% separable) is known by construction."""
    centers = np.eye(3, d) * 2.0
    X, y = [], []
    for k in range(3):
        X.append(centers[k] + spread * gen.normal(size=(n_per, d)))
        y.extend([k] * n_per)
    return np.vstack(X), np.array(y)


class TestTrainOneVsAll:
    def test_separable_data_fully_classified(self, gen):
        X, y = clustered_features(gen)
        model = CL.train_one_vs_all(X, y, class_names=("a", "b", "c"))
        pred = [CL.predict(model, x)[1] for x in X]
        assert (np.array(pred) == y).all()

    def test_median_calibration_exact(self, gen):
        X, y = clustered_features(gen)
        model = CL.train_one_vs_all(X, y)
        for k in range(3):
            scores = X @ model.weights[k] + model.biases[k]
            assert np.median(scores[y == k]) == pytest.approx(1.0, abs=1e-9)
            assert np.median(scores[y != k]) == pytest.approx(-1.0, abs=1e-9)

    def test_deterministic(self, gen):
        X, y = clustered_features(gen)
        a = CL.train_one_vs_all(X, y)
        b = CL.train_one_vs_all(X, y)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.biases, b.biases)

    def test_single_class_rejected(self, gen):
        X = gen.normal(size=(5, 4))
        with pytest.raises(ValueError, match="two classes"):
            CL.train_one_vs_all(X, np.zeros(5, dtype=int))

    def test_default_class_names(self, gen):
        X, y = clustered_features(gen)
        model = CL.train_one_vs_all(X, y)
        assert model.class_names == ("0", "1", "2")


class TestPredict:
    def test_hand_built_scores(self):
        model = CL.LinearClassifier(weights=np.eye(2), biases=np.array([0.0, 1.0]),
                                    class_names=("x", "y"))
        scores, k = CL.predict(model, np.array([3.0, 1.0]))
        np.testing.assert_allclose(scores, [3.0, 2.0])
        assert k == 0

    def test_dim_mismatch(self):
        model = CL.LinearClassifier(weights=np.eye(2), biases=np.zeros(2),
                                    class_names=("x", "y"))
        with pytest.raises(ShapeError):
            CL.predict(model, np.zeros(3))

    def test_softmax_normalizes(self, gen):
        model = CL.LinearClassifier(weights=gen.normal(size=(3, 4)),
                                    biases=gen.normal(size=3),
                                    class_names=("a", "b", "c"))
        p = CL.softmax_head(model, gen.normal(size=4))
        assert p.sum() == pytest.approx(1.0)
        assert (p > 0).all()


class TestGramFeature:
    def test_unit_norm(self, toy_net, gen):
        f = CL.gram_feature(toy_net, gen.uniform(size=(8, 8, 3)), "relu2")
        assert f.ndim == 1
        assert np.linalg.norm(f) == pytest.approx(1.0)

    def test_shift_stability(self, toy_net, gen):
        img = gen.uniform(size=(16, 16, 3))
        a = CL.gram_feature(toy_net, img, "relu2")
        b = CL.gram_feature(toy_net, np.roll(img, 4, axis=1), "relu2")
        # orderless pooling: circular shifts barely move the descriptor
        assert np.linalg.norm(a - b) < 0.2 * np.linalg.norm(a)


class TestClassifierFile:
    def test_round_trip(self, gen, tmp_path):
        model = CL.LinearClassifier(weights=gen.normal(size=(3, 5)),
                                    biases=gen.normal(size=3),
                                    class_names=("a", "b", "c"), layer="relu3_1")
        path = tmp_path / "clf.gmc"
        CL.save_classifier(model, path)
        loaded = CL.load_classifier(path)
        np.testing.assert_array_equal(loaded.weights, model.weights)
        np.testing.assert_array_equal(loaded.biases, model.biases)
        assert loaded.class_names == model.class_names
        assert loaded.layer == model.layer

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.gmc"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(NET.BadMagicError):
            CL.load_classifier(path)

    def test_truncation(self, gen, tmp_path):
        model = CL.LinearClassifier(weights=gen.normal(size=(2, 4)),
                                    biases=np.zeros(2), class_names=("a", "b"))
        path = tmp_path / "clf.gmc"
        CL.save_classifier(model, path)
        path.write_bytes(path.read_bytes()[:-12])
        with pytest.raises((NET.TruncatedFileError, NET.SpecMismatchError)):
            CL.load_classifier(path)

    def test_wrong_kind_rejected(self, gen, tmp_path):
        # a scratch-head file is not a linear classifier
        ds = _tiny_dataset()
        model = _tiny_scratch_model(ds)
        net_path, head_path = tmp_path / "n.gmw", tmp_path / "h.gmc"
        CL.save_scratch_model(model, net_path, head_path)
        with pytest.raises(NET.SpecMismatchError, match="linear"):
            CL.load_classifier(head_path)


class TestJitterConfig:
    def test_f1_center_only(self):
        cfg = CL.JitterConfig("f1", crop=16, margin=8)
        assert cfg.offsets() == [(4, 4)]

    def test_f5_center_plus_corners(self):
        cfg = CL.JitterConfig("f5", crop=16, margin=8)
        offs = cfg.offsets()
        assert len(offs) == 5
        assert set(offs) == {(4, 4), (0, 0), (0, 8), (8, 0), (8, 8)}

    def test_f25_grid(self):
        cfg = CL.JitterConfig("f25", crop=16, margin=8)
        offs = cfg.offsets()
        assert len(offs) == 25
        assert (0, 0) in offs and (8, 8) in offs
        assert all(0 <= r <= 8 and 0 <= c <= 8 for r, c in offs)

    def test_unknown_level(self):
        with pytest.raises(ValueError, match="jitter level"):
            CL.JitterConfig("f7", crop=16, margin=8).offsets()


def _tiny_dataset():
    return DS.make_dataset(4, base_size=24, crop=16, seed=0,
                           kinds=("stripes", "checker"))


def _tiny_scratch_model(ds):
    model, _ = CL.train_head_scratch(ds, "bilinear", "f1", epochs=1, seed=0)
    return model


class TestScratchTraining:
    def test_head_gradients_finite_differences(self, gen):
        A = gen.uniform(size=(3, 3, 4))
        for head in ("bilinear", "fc"):
            params = CL._head_init(head, 3, A.shape, R.stream(0, head))

            def f(z):
                loss, _, _, dA = CL._head_forward_backward(head, params, z, 1)
                return loss, dA

            assert finite_diff_check(f, A, epsilon=1e-4) < 1e-4

    def test_grad_clipping(self, gen):
        g = {"a": gen.normal(size=(4, 4)) * 100, "b": gen.normal(size=3) * 100}
        CL._clip_grads(g, max_norm=5.0)
        total = np.sqrt(sum(float(np.sum(v * v)) for v in g.values()))
        assert total == pytest.approx(5.0)

    def test_small_grads_untouched(self):
        g = {"a": np.full(3, 0.1)}
        before = g["a"].copy()
        CL._clip_grads(g, max_norm=5.0)
        np.testing.assert_array_equal(g["a"], before)

    def test_training_learns_two_easy_classes(self):
        ds = _tiny_dataset()
        model, err = CL.train_head_scratch(ds, "bilinear", "f5", epochs=8, seed=1)
        assert err <= 0.5  # clearly below the 0.5 chance level would be ideal;
        # the hard bound is checked at acceptance scale — here just sanity
        assert model.class_names == ("stripes", "checker")

    def test_scratch_model_round_trip(self, tmp_path):
        ds = _tiny_dataset()
        model = _tiny_scratch_model(ds)
        net_path, head_path = tmp_path / "n.gmw", tmp_path / "h.gmc"
        CL.save_scratch_model(model, net_path, head_path)
        loaded = CL.load_scratch_model(net_path, head_path)
        assert loaded.head == model.head
        assert loaded.crop == model.crop
        assert loaded.class_names == model.class_names
        for k in model.params:
            np.testing.assert_array_equal(loaded.params[k], model.params[k])
        img = ds.images[0][:16, :16]
        np.testing.assert_allclose(CL._model_logits(loaded, img),
                                   CL._model_logits(model, img), atol=1e-12)

    def test_deterministic_under_seed(self):
        ds = _tiny_dataset()
        a, ea = CL.train_head_scratch(ds, "bilinear", "f1", epochs=2, seed=3)
        b, eb = CL.train_head_scratch(ds, "bilinear", "f1", epochs=2, seed=3)
        assert ea == eb
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])


class TestErrorTable:
    def test_csv_format(self, tmp_path):
        rows = [{"head": "bilinear", "jitter": "f1", "seed": 1, "val_error": 0.25},
                {"head": "fc", "jitter": "f25", "seed": 2, "val_error": 0.0}]
        path = tmp_path / "errors.csv"
        CL.write_error_table(rows, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "head,jitter,seed,val_error"
        assert lines[1] == "bilinear,f1,1,0.25"
        assert lines[2] == "fc,f25,2,0.0"
