import numpy as np
import pytest

from gramtex import cli
from gramtex import classify as CL
from gramtex import config as CFG
from gramtex import network as NET
from gramtex.datasets import render_texture
from gramtex.imgio import load_png, save_png
from gramtex.rng import stream


class TestConfigParse:
    def test_round_trip_idempotent(self):
        values = {"size": 32, "alpha": 1.5, "layers": ["relu1_1", "relu2_1"],
                  "init": "quilt", "seed": 7, "tolerance": 0.1}
        text = CFG.serialize_config(values)
        parsed = CFG.parse_config(text)
        assert parsed == values
        assert CFG.serialize_config(parsed) == text

    def test_comments_and_blanks(self):
        text = "# a comment\n\nsize = 16  # trailing comment\n"
        assert CFG.parse_config(text) == {"size": 16}

    def test_unknown_key(self):
        with pytest.raises(CFG.ConfigError, match="unknown key"):
            CFG.parse_config("brightness = 3\n")

    def test_bad_value(self):
        with pytest.raises(CFG.ConfigError, match="bad value"):
            CFG.parse_config("size = large\n")

    def test_missing_equals(self):
        with pytest.raises(CFG.ConfigError, match="key=value"):
            CFG.parse_config("just some words\n")

    def test_line_number_in_error(self):
        with pytest.raises(CFG.ConfigError, match="line 3"):
            CFG.parse_config("size = 16\n\nwhat = 1\n")

    def test_serialize_unknown_key(self):
        with pytest.raises(CFG.ConfigError, match="unknown key"):
            CFG.serialize_config({"sparkle": 1})


@pytest.fixture
def source_png(tmp_path, gen):
    img = render_texture("checker", 32, 32, gen)
    path = tmp_path / "src.png"
    save_png(img, path)
    return str(path)


def _write_cfg(tmp_path, text, name="job.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestCliErrors:
    def test_missing_source_file(self, tmp_path, capsys):
        rc = cli.main(["synth", str(tmp_path / "nope.png"),
                       "--out", str(tmp_path / "o.png")])
        assert rc == 2
        assert "no such image" in capsys.readouterr().err

    def test_bad_config_key(self, tmp_path, source_png, capsys):
        cfg = _write_cfg(tmp_path, "sparkle = 9\n")
        rc = cli.main(["synth", source_png, "--config", cfg,
                       "--out", str(tmp_path / "o.png")])
        assert rc == 2
        assert "unknown key" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, source_png):
        rc = cli.main(["synth", source_png,
                       "--config", str(tmp_path / "none.cfg"),
                       "--out", str(tmp_path / "o.png")])
        assert rc == 2

    def test_corrupt_weight_file(self, tmp_path, source_png):
        bad = tmp_path / "bad.gmw"
        bad.write_bytes(b"XXXX" + b"\x00" * 32)
        cfg = _write_cfg(tmp_path, f"net = {bad}\nsize = 16\niterations = 1\n")
        rc = cli.main(["synth", source_png, "--config", cfg,
                       "--out", str(tmp_path / "o.png")])
        assert rc == 2

    def test_train_bad_head(self, tmp_path):
        rc = cli.main(["train", "--head", "transformer", "--jitter", "f1",
                       "--out", str(tmp_path / "m")])
        assert rc == 2

    def test_train_bad_jitter(self, tmp_path):
        rc = cli.main(["train", "--head", "bilinear", "--jitter", "f9",
                       "--out", str(tmp_path / "m")])
        assert rc == 2

    def test_gradcheck_unknown_module(self, capsys):
        rc = cli.main(["gradcheck", "--module", "bogus"])
        assert rc == 2

    def test_invert_unknown_class(self, tmp_path, gen):
        clf = CL.LinearClassifier(weights=gen.normal(size=(2, 9)),
                                  biases=np.zeros(2),
                                  class_names=("a", "b"), layer="relu2")
        cpath = tmp_path / "clf.gmc"
        CL.save_classifier(clf, cpath)
        rc = cli.main(["invert", "zebra", "--classifier", str(cpath),
                       "--out", str(tmp_path / "o.png")])
        assert rc == 2


FAST_CFG = "size = 16\niterations = 6\nseed = 3\n"


class TestCliSynth:
    def test_writes_output_and_trace(self, tmp_path, source_png):
        cfg = _write_cfg(tmp_path, FAST_CFG)
        out = tmp_path / "o.png"
        trace = tmp_path / "t.csv"
        rc = cli.main(["synth", source_png, "--config", cfg,
                       "--out", str(out), "--trace", str(trace)])
        assert rc == 0
        assert load_png(out).shape == (16, 16, 3)
        lines = trace.read_text().strip().split("\n")
        assert lines[0] == "iter,objective,grad_norm,seconds"
        assert len(lines) >= 2

    def test_deterministic_artifacts(self, tmp_path, source_png):
        cfg = _write_cfg(tmp_path, FAST_CFG)

        def run(tag):
            out = tmp_path / f"{tag}.png"
            trace = tmp_path / f"{tag}.csv"
            rc = cli.main(["synth", source_png, "--config", cfg,
                           "--out", str(out), "--trace", str(trace)])
            assert rc == 0
            stripped = [",".join(l.split(",")[:3])
                        for l in trace.read_text().strip().split("\n")]
            return out.read_bytes(), stripped

        png_a, rows_a = run("a")
        png_b, rows_b = run("b")
        assert png_a == png_b
        assert rows_a == rows_b  # identical excluding the seconds column

    def test_seed_changes_output(self, tmp_path, source_png):
        cfg = _write_cfg(tmp_path, FAST_CFG)
        outs = []
        for seed in (1, 2):
            out = tmp_path / f"s{seed}.png"
            rc = cli.main(["synth", source_png, "--config", cfg,
                           "--seed", str(seed), "--out", str(out)])
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] != outs[1]

    def test_snapshots(self, tmp_path, source_png):
        cfg = _write_cfg(tmp_path, FAST_CFG + "snapshot_every = 2\n")
        out = tmp_path / "snap.png"
        rc = cli.main(["synth", source_png, "--config", cfg, "--out", str(out)])
        assert rc == 0
        snaps = sorted(tmp_path.glob("snap.iter*.png"))
        assert snaps
        assert all(int(p.stem.split("iter")[1]) % 2 == 0 for p in snaps)


class TestCliQuilt:
    def test_quilt_runs(self, tmp_path, source_png, capsys):
        cfg = _write_cfg(tmp_path, "patch = 10\nout_h = 24\nout_w = 24\n")
        out = tmp_path / "q.png"
        rc = cli.main(["quilt", source_png, "--config", cfg, "--out", str(out)])
        assert rc == 0
        assert load_png(out).shape == (24, 24, 3)
        assert "placements" in capsys.readouterr().out

    def test_quilt_deterministic(self, tmp_path, source_png):
        cfg = _write_cfg(tmp_path, "patch = 10\nout_h = 24\nout_w = 24\n")
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        assert cli.main(["quilt", source_png, "--config", cfg,
                         "--seed", "4", "--out", str(a)]) == 0
        assert cli.main(["quilt", source_png, "--config", cfg,
                         "--seed", "4", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestCliTransfer:
    def test_runs(self, tmp_path, source_png, gen):
        content = tmp_path / "content.png"
        save_png(render_texture("stripes", 32, 32, gen), content)
        cfg = _write_cfg(tmp_path, FAST_CFG)
        out = tmp_path / "o.png"
        rc = cli.main(["transfer", str(content), source_png, "--config", cfg,
                       "--lam", "0.1", "--out", str(out)])
        assert rc == 0
        assert load_png(out).shape == (16, 16, 3)


class TestCliInvert:
    def test_runs(self, tmp_path, source_png, gen):
        net = NET.init_random(NET.tex_net_small_spec(), seed=0,
                              mean=np.full(3, 0.5))
        net_path = tmp_path / "net.gmw"
        NET.save_weights(net, net_path)
        feats, labels = [], []
        for k, kind in enumerate(("stripes", "dots")):
            for _ in range(4):
                img = render_texture(kind, 16, 16, gen)
                feats.append(CL.gram_feature(net, img, "relu3_1"))
                labels.append(k)
        clf = CL.train_one_vs_all(np.array(feats), np.array(labels),
                                  class_names=("stripes", "dots"),
                                  layer="relu3_1")
        cpath = tmp_path / "clf.gmc"
        CL.save_classifier(clf, cpath)
        cfg = _write_cfg(tmp_path, FAST_CFG + f"net = {net_path}\n")
        out = tmp_path / "o.png"
        rc = cli.main(["invert", "stripes", "--classifier", str(cpath),
                       "--config", cfg, "--beta", "10", "--out", str(out)])
        assert rc == 0
        assert load_png(out).shape == (16, 16, 3)


class TestCliTrain:
    def test_writes_artifacts(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path,
                         "n_per_class = 2\nbase_size = 20\ncrop = 16\nepochs = 1\n")
        prefix = tmp_path / "model"
        rc = cli.main(["train", "--head", "bilinear", "--jitter", "f1",
                       "--config", cfg, "--seed", "1", "--out", str(prefix)])
        assert rc == 0
        model = CL.load_scratch_model(str(prefix) + ".net", str(prefix) + ".head")
        assert model.head == "bilinear"
        table = (tmp_path / "model.csv").read_text()
        assert table.startswith("head,jitter,seed,val_error\n")
        assert "val_error=" in capsys.readouterr().out


class TestCliGradcheck:
    def test_all_pass(self, capsys):
        rc = cli.main(["gradcheck"])
        assert rc == 0
        out = capsys.readouterr().out
        for name in ("tensor", "bilinear", "network", "losses"):
            assert f"gradcheck {name}:" in out
        assert "FAIL" not in out

    def test_single_module(self, capsys):
        rc = cli.main(["gradcheck", "--module", "bilinear"])
        assert rc == 0
        assert "bilinear" in capsys.readouterr().out

    def test_corrupted_gradient_detected(self, monkeypatch, capsys):
        monkeypatch.setenv("GRAMTEX_GRADCHECK_CORRUPT", "1")
        rc = cli.main(["gradcheck", "--module", "tensor"])
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out
