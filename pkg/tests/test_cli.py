"""CLI surface: phantom gen, segment, evaluate, grid-search, experiments."""

import json

import numpy as np
import pytest

from strokeseg.cli import main
from strokeseg.volume import load_labels

SPEC = {
    "dims": [48, 48, 48],
    "edema_radii": [10.0, 9.0, 9.5],
    "rim_radii": [6.5, 6.0, 6.0],
    "core_radii": [4.0, 3.5, 3.5],
    "center_jitter": 1.5,
    "distractors": [
        {
            "center_frac": [0.36, 0.40, 0.42],
            "radii": [5.0, 4.5, 4.0],
            "intensity": [540.0, 360.0, 700.0],
        }
    ],
}

CONFIG = {
    "classifier": "knn",
    "hyper": {"mode": "fixed"},
    "use_crf": True,
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "spec.json"
    spec.write_text(json.dumps(SPEC))
    config = root / "config.json"
    config.write_text(json.dumps(CONFIG))
    batch = root / "batch"
    code = main(
        [
            "phantom", "gen",
            "--spec", str(spec),
            "--seed", "40",
            "--count", "2",
            "--out", str(batch),
        ]
    )
    assert code == 0
    return root, batch, config


class TestPhantomGen:
    def test_triplets_written(self, workdir):
        _, batch, _ = workdir
        for seed in (40, 41):
            assert (batch / f"phantom_{seed:04d}_vol.mvol").exists()
            assert (batch / f"phantom_{seed:04d}_truth.mvol").exists()
            assert (batch / f"phantom_{seed:04d}_strokes.json").exists()


class TestSegmentEvaluate:
    def test_segment_then_evaluate(self, workdir):
        root, batch, config = workdir
        labels_out = root / "labels.mvol"
        report_out = root / "report.json"
        code = main(
            [
                "segment",
                "--volume", str(batch / "phantom_0040_vol.mvol"),
                "--strokes", str(batch / "phantom_0040_strokes.json"),
                "--config", str(config),
                "--out", str(labels_out),
                "--report", str(report_out),
            ]
        )
        assert code == 0
        labels = load_labels(labels_out)
        assert labels.dims == (48, 48, 48)
        report = json.loads(report_out.read_text())
        assert report["hyperparams"] == {"k": 3}
        assert report["feature_store_bytes"] > 0

        metrics_out = root / "metrics.json"
        code = main(
            [
                "evaluate",
                "--pred", str(labels_out),
                "--truth", str(batch / "phantom_0040_truth.mvol"),
                "--volume", str(batch / "phantom_0040_vol.mvol"),
                "--mask-threshold", "0",
                "--out", str(metrics_out),
            ]
        )
        assert code == 0
        metrics = json.loads(metrics_out.read_text())
        assert set(metrics) == {"complete", "core", "enhancing"}
        assert metrics["complete"]["dice"] > 0.5

    def test_evaluate_perfect_against_itself(self, workdir):
        root, batch, _ = workdir
        out = root / "self.json"
        code = main(
            [
                "evaluate",
                "--pred", str(batch / "phantom_0040_truth.mvol"),
                "--truth", str(batch / "phantom_0040_truth.mvol"),
                "--out", str(out),
            ]
        )
        assert code == 0
        metrics = json.loads(out.read_text())
        for region in metrics.values():
            assert region["dice"] == 1.0

    def test_missing_file_is_io_error(self, workdir):
        root, _, config = workdir
        code = main(
            [
                "segment",
                "--volume", str(root / "nope.mvol"),
                "--strokes", str(root / "nope.json"),
                "--out", str(root / "x.mvol"),
            ]
        )
        assert code == 3

    def test_bad_config_is_validation_error(self, workdir, tmp_path):
        root, batch, _ = workdir
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"classifier": "mlp"}))
        code = main(
            [
                "segment",
                "--volume", str(batch / "phantom_0040_vol.mvol"),
                "--strokes", str(batch / "phantom_0040_strokes.json"),
                "--config", str(bad),
                "--out", str(root / "x.mvol"),
            ]
        )
        assert code == 2


class TestGridSearchCli:
    def test_selection_report(self, workdir, tmp_path):
        root, batch, _ = workdir
        out = tmp_path / "selection.json"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"classifier": "knn", "grid": {"k": [1, 3]}}))
        code = main(
            [
                "grid-search",
                "--volume", str(batch / "phantom_0040_vol.mvol"),
                "--strokes", str(batch / "phantom_0040_strokes.json"),
                "--config", str(cfg),
                "--out", str(out),
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["classifier"] == "knn"
        assert payload["chosen"]["k"] in (1, 3)
        assert len(payload["scores"]) == 2
        assert "seed" in payload


class TestExperimentsCli:
    def test_subsample_table(self, workdir, tmp_path):
        _, batch, config = workdir
        out = tmp_path / "table.csv"
        code = main(
            [
                "experiment", "subsample",
                "--batch", str(batch),
                "--config", str(config),
                "--sizes", "50,150",
                "--out", str(out),
            ]
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("n,mean_dice,mean_seconds")
        assert len(lines) == 3

    def test_hypernoise_table(self, workdir, tmp_path):
        _, batch, config = workdir
        out = tmp_path / "noise.csv"
        code = main(
            [
                "experiment", "hypernoise",
                "--batch", str(batch),
                "--config", str(config),
                "--pcts", "0,25",
                "--out", str(out),
            ]
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "noise_pct,mean_dice"
        assert len(lines) == 3
