"""
Command-line tests.

Commands run in-process through ``main``; exit codes and files are checked
the way a shell user would see them.

To run: pytest tests/test_cli.py
"""

import json

import pytest

from src.main import build_parser, main
from src.services.evaluation_service import SUMMARY_COLUMNS
from src.services.gradcheck_service import gradcheck_service
from src.services.storage_service import MANIFEST_NAME, storage_service
from src.tensor import ops


GEN_ARGS = ["--n", "8", "--frames", "16-18", "--size", "16x16", "--tab-dim", "3", "--seed", "5"]
PROTOCOL_ARGS = ["--epochs", "1", "--folds", "2", "--batch-size", "4", "--seed", "0"]


def _json_lines(text: str):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


@pytest.fixture
def data_dir(tmp_path, capsys):
    path = tmp_path / "data"
    assert main(["gen-data", "--out", str(path)] + GEN_ARGS) == 0
    capsys.readouterr()
    return path


def test_gen_data_is_reproducible(tmp_path, capsys):
    """Two runs with the same seed write byte-identical datasets."""
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["gen-data", "--out", str(first)] + GEN_ARGS) == 0
    assert main(["gen-data", "--out", str(second)] + GEN_ARGS) == 0
    summaries = _json_lines(capsys.readouterr().out)
    assert summaries[0]["n_samples"] == 8
    assert summaries[0]["target_mean"] == summaries[1]["target_mean"]

    assert (first / MANIFEST_NAME).read_text() == (second / MANIFEST_NAME).read_text()
    for path in sorted((first / "samples").iterdir()):
        assert path.read_bytes() == (second / "samples" / path.name).read_bytes()
    assert (first / "run_config.json").is_file()


def test_gen_data_rejects_short_clips(tmp_path, capsys):
    """Clips shorter than one segment are a validation failure."""
    code = main(["gen-data", "--out", str(tmp_path / "d"), "--frames", "12"])
    assert code == 2
    envelope = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert envelope["error"]["code"] == "TOO_SHORT"


def test_paper_scale_flag_and_alias():
    """Both spellings switch every command to the full protocol defaults."""
    parser = build_parser()
    assert parser.parse_args(["train", "--paper-scale"]).full_scale is True
    assert parser.parse_args(["gen-data", "--full-scale", "--out", "d"]).full_scale is True
    assert parser.parse_args(["train"]).full_scale is False


def test_gen_data_rejects_malformed_size(tmp_path, capsys):
    """Frame sizes are written HxW."""
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--size", "sixteen"]) == 2


def test_gradcheck_command(capsys):
    """All checks pass and each registered op is reported once."""
    assert main(["gradcheck"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert sorted(report["worst_error"]) == sorted(gradcheck_service.registered_ops())
    assert report["max"] <= 1e-5


def test_gradcheck_command_fails_on_wrong_derivative(monkeypatch, capsys):
    """A broken derivative exits with the numerical-check code."""
    monkeypatch.setattr(ops, "sigmoid_grad", lambda out, g: -g * out * (1.0 - out))
    assert main(["gradcheck", "--skip-model"]) == 3
    envelope = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert envelope["error"]["code"] == "GRADCHECK_FAILED"


def test_train_linreg_writes_reports_without_checkpoints(data_dir, tmp_path, capsys):
    """Tabular regression produces fold reports and a summary but no checkpoints."""
    run = tmp_path / "linreg"
    args = ["train", "--model", "linreg", "--data", str(data_dir), "--out", str(run)] + PROTOCOL_ARGS
    assert main(args) == 0
    summary = _json_lines(capsys.readouterr().out)[-1]
    assert summary["variant"] == "tabular_linreg"
    assert summary["img"] is False and summary["tab"] is True

    rows = storage_service.read_csv(run / "summary.csv")
    assert list(rows[0]) == SUMMARY_COLUMNS
    assert len(storage_service.read_csv(run / "folds.csv")) == 2
    assert not (run / "checkpoints").exists()
    assert storage_service.read_json(run / "run_config.json")["command"] == "train"


def test_train_then_eval_reproduces_metrics(data_dir, tmp_path, capsys):
    """Re-evaluating stored checkpoints gives the training run's metrics; reruns are identical."""
    first, second = tmp_path / "run1", tmp_path / "run2"
    base = ["train", "--model", "tabattention", "--data", str(data_dir)] + PROTOCOL_ARGS
    assert main(base + ["--out", str(first)]) == 0
    trained = _json_lines(capsys.readouterr().out)[-1]
    assert sorted((first / "checkpoints").iterdir())[0].name == "fold0.ckpt"

    assert main(["eval", "--run", str(first), "--data", str(data_dir)]) == 0
    evaluated = _json_lines(capsys.readouterr().out)[-1]
    assert evaluated["mMAE"] == pytest.approx(trained["mMAE"], rel=1e-9)
    assert (first / "eval_summary.csv").is_file()

    assert main(base + ["--out", str(second)]) == 0
    assert (first / "summary.csv").read_text() == (second / "summary.csv").read_text()


def test_train_rejects_unknown_model(data_dir, tmp_path):
    """Unknown model kinds are a validation failure."""
    args = ["train", "--model", "resnet", "--data", str(data_dir), "--out", str(tmp_path / "r")]
    assert main(args) == 2


def test_train_reports_missing_dataset(tmp_path):
    """A missing dataset directory exits with the validation code."""
    args = ["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "r")] + PROTOCOL_ARGS
    assert main(args) == 2


def test_ablate_writes_rows_in_order(data_dir, tmp_path, capsys):
    """One row per variant with p-values against the full model; a rerun writes the same bytes."""
    run = tmp_path / "ablation"
    assert main(["ablate", "--data", str(data_dir), "--out", str(run)] + PROTOCOL_ARGS) == 0
    capsys.readouterr()
    rows = storage_service.read_csv(run / "ablation.csv")
    assert [r["variant"] for r in rows] == ["baseline", "+TAM", "+CBAM+Tab", "+TAM+Tab", "TabAttention"]
    assert rows[-1]["p_value"] == ""
    assert all(r["p_value"] != "" for r in rows[:-1])
    assert len({r["fold_hash"] for r in rows}) == 1

    rerun = tmp_path / "ablation-rerun"
    assert main(["ablate", "--data", str(data_dir), "--out", str(rerun)] + PROTOCOL_ARGS) == 0
    assert (run / "ablation.csv").read_bytes() == (rerun / "ablation.csv").read_bytes()


def test_compare_writes_rows_in_order(data_dir, tmp_path, capsys):
    """The comparison table covers every fusion method."""
    run = tmp_path / "comparison"
    assert main(["compare", "--data", str(data_dir), "--out", str(run)] + PROTOCOL_ARGS) == 0
    capsys.readouterr()
    rows = storage_service.read_csv(run / "comparison.csv")
    assert [r["variant"] for r in rows] == [
        "linreg", "image_only", "daft", "interactive", "late_concat", "tabattention",
    ]
    assert "fold_hash" not in rows[0]
    assert rows[0]["img"] == "0" and rows[1]["tab"] == "0"
    payload = storage_service.read_json(run / "comparison.json")
    assert len(payload) == 6
