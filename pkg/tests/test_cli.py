import csv
import json

import pytest

from mrlmc.cli import main

SPEC = {"n_records": 40, "seed": 5, "class_ratio": 0.3}
CONFIG = {
    "data": {"fs_common": 5.0},
    "model": {"d": 8, "n_scale": 2, "n_out": 8},
    "semantic": {"n_head": 2},
    "train": {"epochs": 3, "patience": 3},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "spec.json").write_text(json.dumps(SPEC))
    (root / "config.json").write_text(json.dumps(CONFIG))
    assert main(["synth", "--spec", str(root / "spec.json"), "--out", str(root / "raw")]) == 0
    assert main(["preprocess", "--in", str(root / "raw"), "--out", str(root / "data"),
                 "--config", str(root / "config.json")]) == 0
    assert main(["train", "--data", str(root / "data"), "--config", str(root / "config.json"),
                 "--out", str(root / "run")]) == 0
    return root


def test_train_artifacts(workspace):
    run = workspace / "run"
    for name in ("config.json", "metrics.json", "trace.csv", "checkpoint/checkpoint.json", "checkpoint/params.f32"):
        assert (run / name).exists(), name
    trace = list(csv.DictReader((run / "trace.csv").open()))
    assert len(trace) == 3 and {"total", "msc", "sc", "fl"} <= set(trace[0])


def test_eval_reproduces_test_metrics(workspace):
    out = workspace / "eval.json"
    assert main(["eval", "--checkpoint", str(workspace / "run/checkpoint"), "--data", str(workspace / "data"),
                 "--out", str(out)]) == 0
    stored = json.loads((workspace / "run/metrics.json").read_text())
    again = json.loads(out.read_text())
    for key in ("accuracy", "precision", "recall", "f1", "confusion", "n"):
        assert again[key] == stored[key]


def test_train_twice_byte_identical(workspace):
    second = workspace / "run2"
    assert main(["train", "--data", str(workspace / "data"), "--config", str(workspace / "config.json"),
                 "--out", str(second)]) == 0
    for name in ("metrics.json", "checkpoint/checkpoint.json", "checkpoint/params.f32"):
        assert (second / name).read_bytes() == (workspace / "run" / name).read_bytes(), name


def test_embed_csv(workspace):
    out = workspace / "emb.csv"
    assert main(["embed", "--checkpoint", str(workspace / "run/checkpoint"), "--data", str(workspace / "data"),
                 "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0][:3] == ["subject_id", "label", "vector"] and len(rows[0]) == 3 + 16
    assert len(rows) == 1 + 4 * SPEC["n_records"]


def test_bad_temperature_exits_1(workspace, tmp_path, capsys):
    bad = json.loads(json.dumps(CONFIG))
    bad["model"]["temperature"] = -0.5
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    code = main(["train", "--data", str(workspace / "data"), "--config", str(tmp_path / "bad.json"),
                 "--out", str(tmp_path / "run")])
    assert code == 1
    assert "temperature" in capsys.readouterr().err


def test_missing_dataset_exits_2(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "absent"), "--out", str(tmp_path / "run")]) == 2
    assert "error" in capsys.readouterr().err


def test_gradcheck_defaults_exit_0(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 9
