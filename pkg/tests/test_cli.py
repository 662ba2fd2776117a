"""CLI workflow tests on a small end-to-end run."""

import csv
import json
import re
from pathlib import Path

import numpy as np
import pytest

from probsaint.cli import main
from probsaint.checkpoint import load_checkpoint


def run_cli(*argv, capsys=None):
    code = main(list(argv))
    return code


class TestUsage:
    def test_no_arguments_is_usage_error(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["generate", "--frobnicate"]) == 1
        err = capsys.readouterr().err.lower()
        assert "usage" in err

    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["transmogrify"]) == 1

    def test_missing_file_is_runtime_error(self, capsys):
        code = main(["evaluate", "--checkpoint", "/nonexistent.ckpt", "--data", "/nope.csv",
                     "--out-dir", "/tmp/x"])
        assert code == 2


class TestGenerate:
    def test_writes_dataset_spec_and_schema(self, tmp_path, capsys):
        out = tmp_path / "data"
        assert main(["generate", "--n-rows", "40", "--seed", "3", "--out-dir", str(out)]) == 0
        assert (out / "market.csv").exists()
        assert (out / "market_spec.json").exists()
        assert (out / "schema.json").exists()
        rows = list(csv.DictReader((out / "market.csv").open()))
        assert len(rows) == 40

    def test_seed_reproducibility(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["generate", "--n-rows", "30", "--seed", "9", "--out-dir", str(a)])
        main(["generate", "--n-rows", "30", "--seed", "9", "--out-dir", str(b)])
        assert (a / "market.csv").read_bytes() == (b / "market.csv").read_bytes()


@pytest.fixture(scope="module")
def workflow(tmp_path_factory):
    """generate -> train once; reused by the evaluate/predict/sweep tests."""
    root = tmp_path_factory.mktemp("cli_flow")
    data = root / "data"
    run = root / "run"
    assert main(["generate", "--n-rows", "420", "--seed", "17", "--out-dir", str(data)]) == 0
    cfg = {
        "batch_size": 16,
        "max_epochs": 3,
        "patience": 3,
        "seed": 23,
        "model": {"d": 8, "depth": 1, "heads": 2, "dropout": 0.0, "context_batch_size": 8},
    }
    (root / "train.json").write_text(json.dumps(cfg))
    code = main([
        "train",
        "--schema", str(data / "schema.json"),
        "--data", str(data / "market.csv"),
        "--test-start", "2022-05-20",
        "--config", str(root / "train.json"),
        "--out-dir", str(run),
    ])
    assert code == 0
    return {"root": root, "data": data, "run": run}


class TestTrain:
    def test_artifacts_exist(self, workflow):
        run = workflow["run"]
        for name in ("checkpoint.ckpt", "training_log.csv", "train.csv", "val.csv", "test.csv"):
            assert (run / name).exists(), name
        header = (run / "training_log.csv").read_text().splitlines()[0]
        assert header == "epoch,train_loss,val_nll,wall_ms"

    def test_evaluate_on_val_matches_logged_best(self, workflow, capsys):
        """The standalone evaluator must reproduce the trainer's best
        validation NLL on the emitted val split."""
        run = workflow["run"]
        out = workflow["root"] / "eval_val"
        assert main(["evaluate", "--checkpoint", str(run / "checkpoint.ckpt"),
                     "--data", str(run / "val.csv"), "--out-dir", str(out)]) == 0
        report = json.loads((out / "metrics.json").read_text())
        log_lines = (run / "training_log.csv").read_text().splitlines()[1:]
        best_val = min(float(line.split(",")[2]) for line in log_lines)
        assert abs(report["nll"] - best_val) <= 1e-9
        assert (out / "buckets.csv").exists() and (out / "intervals.csv").exists()

    def test_checkpoint_records_fingerprint(self, workflow):
        ckpt = load_checkpoint(workflow["run"] / "checkpoint.ckpt")
        assert re.fullmatch(r"[0-9a-f]{16}", ckpt.data_fingerprint)


class TestPredict:
    def test_predictions_csv(self, workflow):
        run, root = workflow["run"], workflow["root"]
        out = root / "preds.csv"
        assert main(["predict", "--checkpoint", str(run / "checkpoint.ckpt"),
                     "--data", str(run / "test.csv"), "--out", str(out)]) == 0
        rows = list(csv.DictReader(out.open()))
        test_rows = list(csv.DictReader((run / "test.csv").open()))
        assert len(rows) == len(test_rows)
        assert all(float(r["sigma"]) > 0 for r in rows)

    def test_predict_deterministic(self, workflow):
        run, root = workflow["run"], workflow["root"]
        a, b = root / "p1.csv", root / "p2.csv"
        for out in (a, b):
            main(["predict", "--checkpoint", str(run / "checkpoint.ckpt"),
                  "--data", str(run / "test.csv"), "--out", str(out)])
        assert a.read_bytes() == b.read_bytes()


class TestSweep:
    def test_default_durations_in_output(self, workflow):
        run, root = workflow["run"], workflow["root"]
        test_rows = list(csv.DictReader((run / "test.csv").open()))
        vehicle = {k: v for k, v in test_rows[0].items() if k != "sale_price"}
        (root / "vehicle.json").write_text(json.dumps(vehicle))
        out = root / "sweep_out"
        assert main(["sweep", "--checkpoint", str(run / "checkpoint.ckpt"),
                     "--vehicle", str(root / "vehicle.json"), "--out-dir", str(out)]) == 0
        doc = json.loads((out / "sweep.json").read_text())
        assert doc["durations"] == [15.0, 45.0, 75.0, 105.0, 150.0]
        assert doc["mu_normalized"][0] == 1.0
        csv_lines = (out / "sweep.csv").read_text().splitlines()
        assert csv_lines[0] == "duration,mu,sigma,mu_normalized"
        assert len(csv_lines) == 6

    def test_custom_durations_flag(self, workflow):
        run, root = workflow["run"], workflow["root"]
        out = root / "sweep_custom"
        assert main(["sweep", "--checkpoint", str(run / "checkpoint.ckpt"),
                     "--vehicle", str(root / "vehicle.json"), "--durations", "20,40",
                     "--out-dir", str(out)]) == 0
        doc = json.loads((out / "sweep.json").read_text())
        assert doc["durations"] == [20.0, 40.0]


class TestSearch:
    def test_tiny_search(self, workflow, tmp_path):
        data = workflow["data"]
        out = tmp_path / "search"
        space = {"dims": [8], "depths": [1], "heads": [2], "dropouts": [0.0], "trials": 2}
        cfg = {
            "batch_size": 16, "max_epochs": 1, "patience": 1, "seed": 5,
            "model": {"d": 8, "depth": 1, "heads": 2, "context_batch_size": 8},
        }
        (tmp_path / "space.json").write_text(json.dumps(space))
        (tmp_path / "base.json").write_text(json.dumps(cfg))
        code = main(["search", "--schema", str(data / "schema.json"),
                     "--data", str(data / "market.csv"), "--test-start", "2022-05-20",
                     "--space", str(tmp_path / "space.json"), "--config", str(tmp_path / "base.json"),
                     "--trials", "2", "--seed", "4", "--out-dir", str(out)])
        assert code == 0
        table = json.loads((out / "trials.json").read_text())
        assert len(table) == 2 and (out / "best.ckpt").exists()
        assert all(t["dim"] == 8 for t in table)
