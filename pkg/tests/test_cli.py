import json

import jsonschema
import numpy as np
import pytest
from click.testing import CliRunner

import cascseg as cs
from cascseg import manifest as manifest_io
from cascseg.cli import main

SMALL = ["--width", "300", "--height", "240", "--n-sperm", "2", "--noise-speck-count", "3"]


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    result = CliRunner().invoke(
        main, ["synth", "--out-dir", str(out), "--count", "3", "--seed", "0", *SMALL]
    )
    assert result.exit_code == 0, result.output
    return out


class TestSynthCommand:
    def test_writes_scene_layout(self, corpus):
        scenes = sorted(p.name for p in corpus.iterdir())
        assert scenes == ["scene_00000", "scene_00001", "scene_00002"]
        for scene in corpus.iterdir():
            assert (scene / "image.png").exists()
            assert (scene / "gt.json").exists()
            assert list((scene / "masks").glob("inst_*_full.png"))

    def test_rejects_bad_params(self, runner, tmp_path):
        result = runner.invoke(
            main, ["synth", "--out-dir", str(tmp_path), "--overlap-bias", "2.0"]
        )
        assert result.exit_code == 2


class TestSegmentCommand:
    def test_oracle_batch_produces_valid_manifests(self, runner, corpus, tmp_path):
        out = tmp_path / "pred"
        result = runner.invoke(
            main,
            ["segment", "--input-dir", str(corpus), "--output-dir", str(out), "--overlay"],
        )
        assert result.exit_code == 0, result.output
        manifests = sorted(out.glob("scene_*.json"))
        assert len(manifests) == 3
        schema = manifest_io.manifest_schema()
        for path in manifests:
            doc = manifest_io.read_manifest(path)
            jsonschema.validate(doc, schema)
            assert doc["config"]["schema"] == 1
            assert (out / f"{path.stem}_overlay.png").exists()

    def test_deterministic_manifests(self, runner, corpus, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            result = runner.invoke(
                main, ["segment", "--input-dir", str(corpus), "--output-dir", str(out)]
            )
            assert result.exit_code == 0
        for p1 in sorted(out1.glob("*.json")):
            p2 = out2 / p1.name
            assert p1.read_bytes() == p2.read_bytes()

    def test_missing_input_dir(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["segment", "--input-dir", str(tmp_path / "nope"), "--output-dir", str(tmp_path / "o")],
        )
        assert result.exit_code == 2

    def test_empty_input_warns_exits_zero(self, runner, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        result = runner.invoke(
            main, ["segment", "--input-dir", str(empty), "--output-dir", str(tmp_path / "o")]
        )
        assert result.exit_code == 0
        assert "no input images" in result.output

    def test_unparsable_config(self, runner, corpus, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        result = runner.invoke(
            main,
            [
                "segment",
                "--input-dir",
                str(corpus),
                "--output-dir",
                str(tmp_path / "o"),
                "--config",
                str(bad),
            ],
        )
        assert result.exit_code == 2

    def test_remote_unreachable_exits_three(self, runner, corpus, tmp_path, monkeypatch):
        cfg = cs.PipelineConfig()
        cfg.backend.kind = "remote"
        cfg.backend.url = "http://127.0.0.1:9"
        cfg_path = tmp_path / "remote.json"
        cs.save_config(cfg, cfg_path)
        result = runner.invoke(
            main,
            [
                "segment",
                "--input-dir",
                str(corpus),
                "--output-dir",
                str(tmp_path / "o"),
                "--config",
                str(cfg_path),
            ],
        )
        assert result.exit_code == 3

    def test_env_var_overrides_backend_url(self, runner, corpus, tmp_path, monkeypatch):
        cfg = cs.PipelineConfig()
        cfg.backend.kind = "remote"
        cfg.backend.url = "http://name-that-does-not-resolve.invalid:1"
        cfg_path = tmp_path / "remote.json"
        cs.save_config(cfg, cfg_path)
        monkeypatch.setenv("CS3_BACKEND_URL", "http://127.0.0.1:9")
        result = runner.invoke(
            main,
            [
                "segment",
                "--input-dir",
                str(corpus),
                "--output-dir",
                str(tmp_path / "o"),
                "--config",
                str(cfg_path),
            ],
        )
        assert result.exit_code == 3  # env target probed (and refused) instead


class TestEvalCommand:
    def test_gt_vs_gt_is_perfect(self, runner, corpus, tmp_path):
        # score the exported ground truth against itself through manifests
        pred = tmp_path / "pred"
        pred.mkdir()
        for scene in sorted(corpus.iterdir()):
            doc = json.loads((scene / "gt.json").read_text())
            (pred / f"{scene.name}.json").write_text(json.dumps(doc))
        result = runner.invoke(
            main, ["eval", "--pred-dir", str(pred), "--gt-dir", str(corpus)]
        )
        assert result.exit_code == 0, result.output
        report = json.loads((pred / "eval_report.json").read_text())
        assert report["aggregate"]["miou"] == 1.0
        assert report["aggregate"]["mdice"] == 1.0

    def test_pipeline_output_scores_high(self, runner, corpus, tmp_path):
        out = tmp_path / "pred"
        assert (
            runner.invoke(
                main, ["segment", "--input-dir", str(corpus), "--output-dir", str(out)]
            ).exit_code
            == 0
        )
        result = runner.invoke(
            main,
            ["eval", "--pred-dir", str(out), "--gt-dir", str(corpus), "--mode", "matched_only"],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((out / "eval_report.json").read_text())
        assert report["aggregate"]["miou"] >= 0.85

    def test_basename_mismatch_listed_and_skipped(self, runner, corpus, tmp_path):
        pred = tmp_path / "pred"
        pred.mkdir()
        doc = json.loads((sorted(corpus.iterdir())[0] / "gt.json").read_text())
        (pred / "scene_00000.json").write_text(json.dumps(doc))
        (pred / "orphan.json").write_text(json.dumps(doc))
        result = runner.invoke(main, ["eval", "--pred-dir", str(pred), "--gt-dir", str(corpus)])
        assert result.exit_code == 1
        assert "orphan" in result.output

    def test_missing_dirs(self, runner, tmp_path):
        result = runner.invoke(
            main, ["eval", "--pred-dir", str(tmp_path / "x"), "--gt-dir", str(tmp_path / "y")]
        )
        assert result.exit_code == 2
