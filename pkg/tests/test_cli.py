import json

import numpy as np
import pytest

from dgfilter import imageio
from dgfilter.checkpoint import load_checkpoint, save_checkpoint
from dgfilter.cli import build_parser, main
from dgfilter.config import RunConfig


def tiny_config(path, **train):
    run = RunConfig()
    run.generator.chr = 2
    run.generator.num_blocks = 2
    run.train.checkpoint_every = 0
    run.train.eval_every = 0
    for k, v in train.items():
        setattr(run.train, k, v)
    path.write_text(run.to_json())
    return path


@pytest.fixture
def dataset(scene_dir, tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--src", str(scene_dir), "--out", str(out), "--count", "4", "--size", "64",
                 "--seed", "3"]) == 0
    return out


@pytest.fixture
def trained(dataset, tmp_path):
    cfg = tiny_config(tmp_path / "run.json")
    out = tmp_path / "ckpt"
    assert main(["train", "--config", str(cfg), "--data", str(dataset), "--out", str(out),
                 "--iterations", "2"]) == 0
    return out / "latest.dgf"


class TestHelp:
    @pytest.mark.parametrize("cmd", ["synth", "train", "deblur", "eval", "config"])
    def test_help_lists_every_flag(self, cmd, capsys):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        sub = build_parser()._subparsers._group_actions[0].choices[cmd]
        for action in sub._actions:
            for flag in action.option_strings:
                assert flag in text

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2


class TestSynth:
    def test_pairs_and_manifest(self, dataset, capsys):
        manifest = json.loads((dataset / "manifest.json").read_text())
        assert manifest["count"] == 4 and len(manifest["entries"]) == 4
        assert len(list(dataset.glob("*_blur.png"))) == 4
        assert imageio.read_rgb(dataset / manifest["entries"][0]["blur_file"]).shape == (64, 64, 3)

    def test_reproducible(self, scene_dir, dataset, tmp_path):
        again = tmp_path / "again"
        main(["synth", "--src", str(scene_dir), "--out", str(again), "--count", "4", "--size", "64", "--seed", "3"])
        for f in sorted(dataset.iterdir()):
            assert (again / f.name).read_bytes() == f.read_bytes()

    def test_missing_src(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--out", str(tmp_path / "x"), "--count", "1"])
        assert exc.value.code == 2

    def test_empty_result(self, tmp_path):
        (tmp_path / "none").mkdir()
        assert main(["synth", "--src", str(tmp_path / "none"), "--out", str(tmp_path / "x"), "--count", "2"]) == 3


class TestTrain:
    def test_zero_iterations(self, dataset, tmp_path):
        cfg = tiny_config(tmp_path / "run.json")
        out = tmp_path / "ck"
        assert main(["train", "--config", str(cfg), "--data", str(dataset), "--out", str(out),
                     "--iterations", "0"]) == 0
        assert (out / "ckpt_000000.dgf").exists()
        assert (out / "train.ndjson").read_text() == ""

    def test_log_and_resume(self, trained, dataset, tmp_path):
        out = trained.parent
        lines = [json.loads(l) for l in (out / "train.ndjson").read_text().splitlines()]
        assert [l["iter"] for l in lines] == [0, 1]
        assert {"loss_d", "gan", "percep", "l1", "net", "timestamp"} <= set(lines[0])
        assert main(["train", "--config", str(out / "run.json"), "--out", str(out),
                     "--resume", str(trained), "--iterations", "4"]) == 0
        lines = [json.loads(l) for l in (out / "train.ndjson").read_text().splitlines()]
        assert [l["iter"] for l in lines] == [0, 1, 2, 3]
        assert load_checkpoint(out / "latest.dgf").iteration == 4

    def test_checkpoints_reproducible(self, trained, dataset, tmp_path):
        cfg = tiny_config(tmp_path / "run2.json")
        out = tmp_path / "ck2"
        main(["train", "--config", str(cfg), "--data", str(dataset), "--out", str(out), "--iterations", "2"])
        assert (out / "latest.dgf").read_bytes() == trained.read_bytes()

    @pytest.mark.filterwarnings("ignore:overflow encountered:RuntimeWarning",
                                "ignore:invalid value encountered:RuntimeWarning")
    def test_nan_abort(self, dataset, tmp_path, capsys):
        cfg = tiny_config(tmp_path / "run.json", lr=1e38)
        code = main(["train", "--config", str(cfg), "--data", str(dataset), "--out", str(tmp_path / "ck"),
                     "--iterations", "5"])
        assert code == 4
        err = capsys.readouterr().err
        assert "diagnostic:" in err and "nan_abort" in err

    def test_bad_config(self, dataset, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"train": {"nonsense": 1}}))
        assert main(["train", "--config", str(bad), "--data", str(dataset), "--out", str(tmp_path / "o")]) == 2

    def test_resume_mismatch(self, trained, dataset, tmp_path):
        cfg = tiny_config(tmp_path / "wide.json")
        doc = json.loads(cfg.read_text())
        doc["generator"]["chr"] = 4
        cfg.write_text(json.dumps(doc))
        assert main(["train", "--config", str(cfg), "--data", str(dataset), "--out", str(tmp_path / "o"),
                     "--resume", str(trained), "--iterations", "3"]) == 5


class TestDeblur:
    def test_single_image(self, trained, dataset, tmp_path, capsys):
        src = sorted(dataset.glob("*_blur.png"))[0]
        out = tmp_path / "out.png"
        assert main(["deblur", "--ckpt", str(trained), "--in", str(src), "--out", str(out)]) == 0
        assert imageio.read_rgb(out).shape == imageio.read_rgb(src).shape
        assert capsys.readouterr().out.strip().endswith(" s")
        first = out.read_bytes()
        main(["deblur", "--ckpt", str(trained), "--in", str(src), "--out", str(out)])
        assert out.read_bytes() == first

    def test_directory(self, trained, dataset, tmp_path, monkeypatch):
        monkeypatch.setenv("DGF_THREADS", "2")
        out = tmp_path / "outdir"
        assert main(["deblur", "--ckpt", str(trained), "--in", str(dataset), "--out", str(out)]) == 0
        assert len(list(out.glob("*.png"))) == 8

    def test_not_a_checkpoint(self, dataset, tmp_path):
        src = sorted(dataset.glob("*_blur.png"))[0]
        assert main(["deblur", "--ckpt", str(src), "--in", str(src), "--out", str(tmp_path / "o.png")]) == 5

    def test_config_mismatch(self, trained, dataset, tmp_path):
        ckpt = load_checkpoint(trained)
        ckpt.config["run"]["generator"]["chr"] = 8
        save_checkpoint(ckpt, tmp_path / "lying.dgf")
        src = sorted(dataset.glob("*_blur.png"))[0]
        assert main(["deblur", "--ckpt", str(tmp_path / "lying.dgf"), "--in", str(src),
                     "--out", str(tmp_path / "o.png")]) == 5


class TestEval:
    def _dirs(self, tmp_path, rng, n=3, size=32):
        a, b = tmp_path / "pred", tmp_path / "ref"
        for i in range(n):
            img = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
            imageio.write_png(a / f"im{i}.png", img)
            noisy = np.clip(img.astype(int) + rng.integers(-20, 21, size=img.shape), 0, 255).astype(np.uint8)
            imageio.write_png(b / f"im{i}.png", noisy)
        return a, b

    def test_identical_dirs(self, tmp_path, rng):
        a, _ = self._dirs(tmp_path, rng)
        assert main(["eval", "--pred", str(a), "--ref", str(a), "--out", str(tmp_path / "r.json")]) == 0
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["psnr"]["per_image"] == ["inf"] * 3 and doc["psnr"]["mean"] == "inf"
        assert all(abs(v - 1) <= 1e-9 for v in doc["ssim"]["per_image"])

    def test_report_mean_and_csv(self, tmp_path, rng):
        a, b = self._dirs(tmp_path, rng)
        assert main(["eval", "--pred", str(a), "--ref", str(b), "--out", str(tmp_path / "r.json"),
                     "--csv", str(tmp_path / "r.csv")]) == 0
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["count"] == 3 and doc["images"] == ["im0.png", "im1.png", "im2.png"]
        for m in ("psnr", "ssim", "ms_ssim", "uiqi"):
            assert doc[m]["mean"] == pytest.approx(np.mean(doc[m]["per_image"]), rel=1e-12)
        rows = (tmp_path / "r.csv").read_text().splitlines()
        assert rows[0] == "image,psnr,ssim,ms_ssim,uiqi" and rows[-1].startswith("mean,")

    def test_size_mismatch(self, tmp_path, rng, capsys):
        a, b = self._dirs(tmp_path, rng)
        imageio.write_png(b / "im1.png", np.zeros((16, 32, 3), np.uint8))
        assert main(["eval", "--pred", str(a), "--ref", str(b)]) == 6
        assert "im1.png" in capsys.readouterr().err

    def test_unpaired(self, tmp_path, rng, capsys):
        a, b = self._dirs(tmp_path, rng)
        (b / "im2.png").unlink()
        assert main(["eval", "--pred", str(a), "--ref", str(b)]) == 6
        assert "im2.png" in capsys.readouterr().err

    def test_metric_subset(self, tmp_path, rng, capsys):
        a, b = self._dirs(tmp_path, rng)
        assert main(["eval", "--pred", str(a), "--ref", str(b), "--metrics", "psnr"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert set(doc) == {"count", "images", "psnr"}
        assert main(["eval", "--pred", str(a), "--ref", str(b), "--metrics", "fsim"]) == 2


class TestConfigCommand:
    def test_emit_defaults_round_trips(self, capsys, tmp_path):
        assert main(["config", "--emit-defaults"]) == 0
        text = capsys.readouterr().out
        assert RunConfig.from_dict(json.loads(text)) == RunConfig()
        (tmp_path / "c.json").write_text(text)
        assert main(["config", "--check", str(tmp_path / "c.json")]) == 0
        assert capsys.readouterr().out == text

    def test_check_rejects_unknown(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"metrics": {"fsim": True}}))
        assert main(["config", "--check", str(tmp_path / "c.json")]) == 2

    def test_needs_an_action(self):
        assert main(["config"]) == 2
