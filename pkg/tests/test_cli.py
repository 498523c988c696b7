import numpy as np
import pytest

from pcgdenoise.cli import main
from pcgdenoise.data_io import load_manifest
from pcgdenoise.evaluation import (
    read_degradation_csv,
    read_embedding_csv,
    read_snr_csv,
)
from pcgdenoise.signal_core import read_wav, write_wav
from pcgdenoise.synth import make_toy_corpus

BASE_SETTINGS = {
    "run": {"seed": "0"},
    "segmentation": {"segment_len_s": "1.0", "hop_s": "0.5", "target_rate_hz": "800"},
    "augment": {
        "noise_kinds": "white",
        "snr_min_db": "5",
        "snr_max_db": "15",
        "mask_prob": "0",
        "gain_prob": "0",
    },
    "model": {
        "levels": "2",
        "base_channels": "4",
        "kernel_size": "3",
        "input_len": "800",
        "dropout_rate": "0",
        "projection_hidden": "8",
        "projection_dim": "4",
    },
    "train": {
        "learning_rate": "0.001",
        "batch_size": "16",
        "epochs": "1",
        "contrastive_weight": "0.1",
    },
    "eval": {
        "noise_kinds": "white",
        "snr_points_db": "0, 5",
        "n_segments": "12",
        "classifier_epochs": "2",
        "tsne_perplexity": "5",
        "tsne_iterations": "250",
    },
}


def write_ini(path, corpus, **overrides):
    settings = {section: dict(keys) for section, keys in BASE_SETTINGS.items()}
    settings.setdefault("data", {})["root"] = str(corpus)
    for section, keys in overrides.items():
        settings.setdefault(section, {}).update(keys)
    lines = []
    for section, keys in settings.items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in keys.items())
        lines.append("")
    path.write_text("\n".join(lines))
    return path


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_corpus")
    for seg in make_toy_corpus(10, 800, 3.0, seed=5):
        class_dir = root / seg.label
        class_dir.mkdir(exist_ok=True)
        write_wav(class_dir / f"rec_{seg.source_id.rsplit('/', 1)[-1]}.wav", seg)
    return root


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, corpus):
    """One prepare/train/evaluate/embed/plot run shared by the read-only tests."""
    base = tmp_path_factory.mktemp("cli_run")
    ini = write_ini(base / "run.ini", corpus)
    out = base / "out"
    for command in (["prepare"], ["train"], ["evaluate"], ["embed"], ["plot"]):
        rc = main(["--config", str(ini), "--out", str(out), "--quiet"] + command)
        assert rc == 0, f"{command} failed"
    return {"ini": ini, "out": out}


class TestPipelineArtifacts:
    def test_prepare_wrote_manifest(self, pipeline):
        manifest = load_manifest(pipeline["out"] / "manifest.jsonl")
        assert len(manifest.entries) == 250  # 50 recordings x 5 windows
        assert len(manifest.entries_for("train")) == 200
        assert len(manifest.entries_for("val")) == 25
        assert len(manifest.entries_for("test")) == 25

    def test_resolved_config_echoed(self, pipeline):
        text = (pipeline["out"] / "resolved_config.ini").read_text()
        assert "[train]" in text
        assert "contrastive_weight = 0.1" in text

    def test_train_artifacts(self, pipeline):
        out = pipeline["out"]
        assert (out / "checkpoints" / "best.pt").exists()
        assert (out / "checkpoints" / "last.pt").exists()
        lines = (out / "training_log.csv").read_text().splitlines()
        assert lines[0] == "step,epoch,recon_loss,contra_loss,total_loss,learning_rate"
        assert len(lines) == 13  # header + 200 // 16 steps

    def test_evaluate_artifacts(self, pipeline):
        eval_dir = pipeline["out"] / "eval"
        cells = read_snr_csv(eval_dir / "snr_grid.csv")
        assert [(c.kind, c.target_snr_db) for c in cells] == [("white", 0.0), ("white", 5.0)]
        assert all(c.n == 12 for c in cells)
        reports = read_degradation_csv(eval_dir / "degradation.csv")
        assert [r.condition for r in reports] == ["clean", "noisy", "denoised"]

    def test_embed_artifacts(self, pipeline):
        export = read_embedding_csv(pipeline["out"] / "eval" / "embeddings.csv")
        assert len(export.ids) == 12
        assert export.embeddings.shape == (12, 4)
        np.testing.assert_allclose(np.linalg.norm(export.embeddings, axis=1), 1.0, atol=1e-6)
        assert export.coords.shape == (12, 2)

    def test_plot_artifacts(self, pipeline):
        out = pipeline["out"]
        for png in (
            out / "training_curve.png",
            out / "eval" / "snr_grid.png",
            out / "eval" / "degradation.png",
            out / "eval" / "embeddings.png",
        ):
            assert png.exists() and png.stat().st_size > 0

    def test_cache_populated(self, pipeline):
        entries = list((pipeline["out"] / "cache").glob("*.f64"))
        assert entries  # use_cache defaults to true


class TestDenoiseCommand:
    def test_denoise_wav(self, pipeline, corpus, tmp_path):
        source = next((corpus / "N").glob("*.wav"))
        output = tmp_path / "denoised.wav"
        rc = main([
            "--config", str(pipeline["ini"]), "--out", str(pipeline["out"]), "--quiet",
            "denoise", str(source), "--output", str(output),
        ])
        assert rc == 0
        seg = read_wav(output)
        assert seg.sample_rate_hz == 800
        assert len(seg.samples) == 2400
        assert np.all(np.isfinite(seg.samples))

    def test_plot_with_input_spectrograms(self, pipeline, corpus):
        source = next((corpus / "N").glob("*.wav"))
        rc = main([
            "--config", str(pipeline["ini"]), "--out", str(pipeline["out"]), "--quiet",
            "plot", "--input", str(source),
        ])
        assert rc == 0
        assert (pipeline["out"] / "eval" / "spectrograms.png").exists()


class TestIdentityEvaluate:
    def test_calibration(self, tmp_path, corpus, capsys):
        ini = write_ini(tmp_path / "run.ini", corpus)
        out = tmp_path / "out"
        argv = ["--config", str(ini), "--out", str(out), "--quiet"]
        assert main(argv + ["prepare"]) == 0
        assert main(argv + ["evaluate", "--identity-denoiser"]) == 0
        cells = read_snr_csv(out / "eval" / "snr_grid.csv")
        for cell in cells:
            assert cell.mean_output_snr_db == pytest.approx(cell.target_snr_db, abs=1e-9)
        stdout = capsys.readouterr().out
        assert "identity denoiser" in stdout


class TestExitCodes:
    def test_usage_error_is_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_config_key_is_2(self, tmp_path, capsys):
        ini = tmp_path / "bad.ini"
        ini.write_text("[train]\nlearning_rte = 0.1\n")
        rc = main(["--config", str(ini), "--out", str(tmp_path / "out"), "prepare"])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_dataset_root_is_2(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path / "out"), "--quiet", "prepare"])
        assert rc == 2
        assert "root is not configured" in capsys.readouterr().err

    def test_missing_manifest_is_3(self, tmp_path, corpus, capsys):
        ini = write_ini(tmp_path / "run.ini", corpus)
        out = tmp_path / "out"
        rc = main(["--config", str(ini), "--out", str(out), "--quiet", "train"])
        assert rc == 3
        assert "prepare" in capsys.readouterr().err
        # the resolved config is echoed even when the command then fails
        assert (out / "resolved_config.ini").exists()

    def test_missing_checkpoint_is_3(self, tmp_path, corpus, capsys):
        ini = write_ini(tmp_path / "run.ini", corpus)
        source = next((corpus / "N").glob("*.wav"))
        rc = main([
            "--config", str(ini), "--out", str(tmp_path / "out"), "--quiet",
            "denoise", str(source),
        ])
        assert rc == 3
        assert "checkpoint" in capsys.readouterr().err

    def test_bank_kind_without_bank_root_is_2(self, tmp_path, corpus, capsys):
        ini = write_ini(
            tmp_path / "run.ini", corpus,
            eval={"noise_kinds": "white", "degradation_kind": "hospital"},
        )
        out = tmp_path / "out"
        argv = ["--config", str(ini), "--out", str(out), "--quiet"]
        assert main(argv + ["prepare"]) == 0
        rc = main(argv + ["evaluate", "--identity-denoiser"])
        assert rc == 2
        assert "noise_bank_root" in capsys.readouterr().err

    def test_divergent_training_is_4(self, tmp_path, corpus, capsys):
        ini = write_ini(
            tmp_path / "run.ini", corpus, train={"learning_rate": "1e18"},
        )
        out = tmp_path / "out"
        argv = ["--config", str(ini), "--out", str(out), "--quiet"]
        assert main(argv + ["prepare"]) == 0
        rc = main(argv + ["train"])
        assert rc == 4
        assert "non-finite loss" in capsys.readouterr().err

    def test_nothing_to_plot_is_3(self, tmp_path, corpus, capsys):
        ini = write_ini(tmp_path / "run.ini", corpus)
        rc = main([
            "--config", str(ini), "--out", str(tmp_path / "empty"), "--quiet", "plot",
        ])
        assert rc == 3
        assert "nothing to plot" in capsys.readouterr().err


class TestTrainOptions:
    def test_lambda_override_zeroes_contrastive(self, tmp_path, corpus):
        ini = write_ini(tmp_path / "run.ini", corpus)
        out = tmp_path / "out"
        argv = ["--config", str(ini), "--out", str(out), "--quiet"]
        assert main(argv + ["prepare"]) == 0
        assert main(argv + ["train", "--lambda", "0"]) == 0
        rows = (out / "training_log.csv").read_text().splitlines()[1:]
        assert all(float(row.split(",")[3]) == 0.0 for row in rows)

    def test_resume_from_checkpoint(self, tmp_path, corpus):
        ini = write_ini(tmp_path / "run.ini", corpus, train={"epochs": "2"})
        out = tmp_path / "out"
        argv = ["--config", str(ini), "--out", str(out), "--quiet"]
        assert main(argv + ["prepare"]) == 0
        one_epoch = write_ini(tmp_path / "one.ini", corpus, train={"epochs": "1"})
        argv_one = ["--config", str(one_epoch), "--out", str(out), "--quiet"]
        assert main(argv_one + ["train"]) == 0
        steps_before = len((out / "training_log.csv").read_text().splitlines()) - 1
        assert main(argv + [
            "train", "--resume", str(out / "checkpoints" / "last.pt"),
        ]) == 0
        steps_after = len((out / "training_log.csv").read_text().splitlines()) - 1
        assert steps_after == 2 * steps_before
