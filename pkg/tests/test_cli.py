import json

import numpy as np
import pytest

from conftest import synth_records, tiny_recipe, write_images
from dacnet.cli import main
from dacnet.dataset import read_manifest
from dacnet.labels import DISEASES, decode_labels


def records_to_csv(records, path):
    lines = ["Image Index,Finding Labels,Follow-up #,Patient ID,Patient Age,Patient Gender"]
    for rec in records:
        names = decode_labels(rec.labels)
        finding = "|".join(names) if names else "No Finding"
        lines.append(f"{rec.image_id},{finding},0,{rec.patient_id},{rec.age or 50},{rec.gender or 'M'}")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture()
def cli_corpus(tmp_path):
    records = synth_records(14, prevalence=(0.6, 0.4, 0.3), seed=6)
    data_dir = tmp_path / "img"
    data_dir.mkdir()
    write_images(records, data_dir, seed=6)
    metadata = records_to_csv(records, tmp_path / "metadata.csv")
    return records, metadata, data_dir, tmp_path


class TestStats:
    def test_table_format(self, tmp_path, capsys):
        records = synth_records(10, prevalence=(), seed=0)  # all "No Finding"
        metadata = records_to_csv(records, tmp_path / "m.csv")
        assert main(["stats", "--metadata", str(metadata)]) == 0
        out = capsys.readouterr().out
        assert "No Finding 10 100.00%" in out

    def test_top_limits_rows(self, cli_corpus, capsys):
        _, metadata, _, _ = cli_corpus
        assert main(["stats", "--metadata", str(metadata), "--top", "1"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 2  # summary line + one combination row


class TestPrepareSplits:
    def test_deterministic_reruns(self, cli_corpus, capsys):
        _, metadata, _, tmp = cli_corpus
        for name in ("a.tsv", "b.tsv"):
            code = main([
                "prepare-splits", "--metadata", str(metadata),
                "--out", str(tmp / name), "--seed", "17",
            ])
            assert code == 0
        assert (tmp / "a.tsv").read_bytes() == (tmp / "b.tsv").read_bytes()
        manifest = read_manifest(tmp / "a.tsv")
        assert manifest.seed == 17
        assert (tmp / "reproducibility.json").exists()

    def test_bad_ratios_exit_1(self, cli_corpus, capsys):
        _, metadata, _, tmp = cli_corpus
        code = main([
            "prepare-splits", "--metadata", str(metadata),
            "--out", str(tmp / "x.tsv"), "--ratios", "0.5,0.5,0.5",
        ])
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestTrainEvaluateExplain:
    @pytest.fixture()
    def trained_run(self, cli_corpus, tmp_path):
        from dacnet.recipes import save_recipe

        records, metadata, data_dir, tmp = cli_corpus
        manifest_path = tmp / "split.tsv"
        assert main([
            "prepare-splits", "--metadata", str(metadata),
            "--out", str(manifest_path), "--ratios", "0.6,0.2,0.2", "--seed", "3",
        ]) == 0
        recipe_path = tmp / "tiny.yaml"
        save_recipe(tiny_recipe(max_epochs=12, batch_size=8, seed=5), recipe_path)
        run_dir = tmp / "run"
        assert main([
            "train", "--recipe", str(recipe_path), "--metadata", str(metadata),
            "--data-dir", str(data_dir), "--manifest", str(manifest_path),
            "--run-dir", str(run_dir),
        ]) == 0
        return dict(metadata=metadata, data_dir=data_dir,
                    manifest=manifest_path, run_dir=run_dir, tmp=tmp)

    def test_train_writes_run_layout(self, trained_run, capsys):
        run_dir = trained_run["run_dir"]
        for name in ("config.yaml", "best.ckpt", "last.ckpt", "history.csv",
                     "reproducibility.json"):
            assert (run_dir / name).exists(), name
        stamp = json.loads((run_dir / "reproducibility.json").read_text())
        assert {"seed", "config_hash", "version", "argv"} <= set(stamp)

    def test_tune_evaluate_explain_pipeline(self, trained_run, capsys):
        tmp = trained_run["tmp"]
        thresholds_path = tmp / "thresholds.json"
        assert main([
            "tune-thresholds", "--checkpoint", str(trained_run["run_dir"] / "best.ckpt"),
            "--metadata", str(trained_run["metadata"]),
            "--data-dir", str(trained_run["data_dir"]),
            "--manifest", str(trained_run["manifest"]),
            "--out", str(thresholds_path),
        ]) == 0
        doc = json.loads(thresholds_path.read_text())
        assert doc["fitted_on"] == "val"

        report_path = tmp / "report.json"
        assert main([
            "evaluate", "--checkpoint", str(trained_run["run_dir"] / "best.ckpt"),
            "--metadata", str(trained_run["metadata"]),
            "--data-dir", str(trained_run["data_dir"]),
            "--manifest", str(trained_run["manifest"]),
            "--split", "test", "--thresholds", str(thresholds_path),
            "--report", str(report_path), "--compare-baseline",
        ]) == 0
        out = capsys.readouterr().out
        assert "macro-AUC" in out
        assert "chexnet-2017" in out
        report = json.loads(report_path.read_text())
        assert set(report["per_disease"]) == set(DISEASES)
        comparison = json.loads((tmp / "report.comparison.json").read_text())
        assert set(comparison["columns"]) == {"chexnet-2017", "this run"}

        overlay_path = tmp / "cam.png"
        assert main([
            "explain", "--checkpoint", str(trained_run["run_dir"] / "best.ckpt"),
            "--image", str(trained_run["data_dir"] / "p00000_0.png"),
            "--disease", "Atelectasis", "--out", str(overlay_path),
        ]) == 0
        assert overlay_path.stat().st_size > 0

    def test_test_fitted_thresholds_exit_1(self, trained_run, capsys):
        tmp = trained_run["tmp"]
        leaked = tmp / "leaked.json"
        leaked.write_text(json.dumps({
            "fitted_on": "test",
            "thresholds": {name: 0.5 for name in DISEASES},
        }))
        code = main([
            "evaluate", "--checkpoint", str(trained_run["run_dir"] / "best.ckpt"),
            "--metadata", str(trained_run["metadata"]),
            "--data-dir", str(trained_run["data_dir"]),
            "--manifest", str(trained_run["manifest"]),
            "--split", "test", "--thresholds", str(leaked),
        ])
        assert code == 1
        assert "validation" in capsys.readouterr().err


class TestEvaluateFromPredictions:
    def test_saved_scores_path(self, tmp_path, capsys):
        from dacnet.evaluation import PredictionSet, write_predictions_csv

        rng = np.random.default_rng(2)
        targets = rng.integers(0, 2, size=(30, 14))
        pred = PredictionSet(
            [f"i{k}.png" for k in range(30)],
            np.clip(targets + rng.normal(0, 0.2, size=(30, 14)), 0, 1),
            targets,
            split="test",
        )
        path = tmp_path / "preds.csv"
        write_predictions_csv(pred, path)
        assert main(["evaluate", "--predictions", str(path)]) == 0
        assert "macro-AUC" in capsys.readouterr().out

    def test_evaluate_without_inputs_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["evaluate"])
        assert exc.value.code == 2


class TestParser:
    @pytest.mark.parametrize("sub", [
        "stats", "prepare-splits", "train", "tune-thresholds",
        "evaluate", "explain", "serve",
    ])
    def test_every_subcommand_has_help(self, sub, capsys):
        with pytest.raises(SystemExit) as exc:
            main([sub, "--help"])
        assert exc.value.code == 0
        assert "usage" in capsys.readouterr().out

    def test_unknown_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
