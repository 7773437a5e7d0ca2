import json

import pytest

from lstmlab.cli import main
from lstmlab.lstm import load_checkpoint

SYNTH = {
    "name": "tiny",
    "seed": 3,
    "data": {"kind": "synth", "n_train": 60, "n_test": 20, "vocab_size": 10, "signal_pos": 5},
    "train": {"epochs": 2, "learning_rate": 0.01, "embedding_dim": 4, "hidden_dim": 4,
              "seq_len": 8, "batch_size": 16, "optimizer": "adam"},
    "sweep": {"a_grid": [0.001], "p_grid": [2.0]},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SYNTH), encoding="utf-8")
    return path


def test_reorder(capsys):
    assert main(["reorder", "--len", "21"]) == 0
    assert capsys.readouterr().out.strip() == "0,4,9,14,17,20,16,19,11,13,6,8,1,3,12,18,2,7,5,15,10"
    assert main(["reorder", "--len", "21", "--ngram", "2"]) == 0
    assert capsys.readouterr().out.strip() == "20,1,0,9,8,19,18,13,12,17,16,3,2,7,6,5,4,15,14,11,10"
    assert main(["reorder", "--len", "21", "--pre-reversal"]) == 0
    assert capsys.readouterr().out.strip().startswith("10,15,5,7,2,18")


def test_reorder_bad_length(capsys):
    assert main(["reorder", "--len", "0"]) != 0
    err = capsys.readouterr().err
    assert "usage:" in err and "--len" in err
    assert main(["reorder", "--len", "4", "--ngram", "5"]) != 0


def test_train_writes_outputs(config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"config.json", "metrics.jsonl", "checkpoint.npz", "summary.json"}
    lines = (out / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2 * 3
    first = json.loads(lines[0])
    assert set(first) == {"epoch", "split", "accuracy", "mean_loss", "error_rate"}
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["seed"] == 3 and resolved["lstmlab_version"]
    params, variant, meta = load_checkpoint(out / "checkpoint.npz")
    assert params.hidden_dim == 4 and variant.kind == "baseline"
    assert capsys.readouterr().out.count("\n") == 6

    assert main(["eval", "--config", str(config), "--out", str(out)]) == 0
    ev = json.loads((out / "eval.json").read_text())
    summary = json.loads((out / "summary.json").read_text())
    assert ev["test"]["accuracy"] == summary["test"]["accuracy"]
    assert ev["config"] == json.loads((out / "config.json").read_text())
    assert len(ev["checkpoint"]["sha256"]) == 64


def test_train_rerun_is_identical(config, tmp_path):
    for name in ("a", "b"):
        assert main(["train", "--config", str(config), "--out", str(tmp_path / name), "--quiet"]) == 0
    for f in ("metrics.jsonl", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    configs = [json.loads((tmp_path / n / "config.json").read_text()) for n in ("a", "b")]
    for c in configs:
        c.pop("output_dir")
    assert configs[0] == configs[1]


def test_seed_override(config, tmp_path):
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "s"), "--seed", "11", "--quiet"]) == 0
    assert json.loads((tmp_path / "s" / "config.json").read_text())["seed"] == 11


def test_unknown_key_rejected(tmp_path, capsys):
    bad = dict(SYNTH, train={**SYNTH["train"], "hiden_dim": 3})
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    out = tmp_path / "never"
    assert main(["train", "--config", str(path), "--out", str(out)]) != 0
    assert "train.hiden_dim" in capsys.readouterr().err
    assert not out.exists()


def test_syntax_error_names_line(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "seed": 1,\n  "data": {,\n}')
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "o")]) != 0
    assert "broken.json:3" in capsys.readouterr().err


def test_missing_dataset_leaves_no_output(tmp_path, capsys):
    cfg = dict(SYNTH, data={"kind": "r8", "path": str(tmp_path / "nowhere")})
    path = tmp_path / "r8.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["train", "--config", str(path), "--out", str(out)]) != 0
    assert "nowhere" in capsys.readouterr().err
    assert not out.exists()


def test_compare_rows_flag(config, tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(config), "--out", str(out), "--rows", "baseline,reorder", "--quiet"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert [r["label"] for r in report["rows"]] == ["Baseline (regular LSTM)", "Input Reordering"]
    assert "Input Reordering" in (out / "report.txt").read_text()
    assert main(["compare", "--config", str(config), "--out", str(out), "--rows", "nope"]) != 0


def test_sweep(config, tmp_path):
    cfg = dict(SYNTH, sweep={"learning_rates": [0.01, 0.001], "a_grid": [0.001], "p_grid": [1.0, 2.0]})
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(path), "--out", str(out), "--quiet"]) == 0
    result = json.loads((out / "sweep.json").read_text())
    assert len(result["entries"]) == 4
    assert result["best"] in result["entries"]


def test_no_output_dir(config, capsys):
    assert main(["train", "--config", str(config)]) != 0
    assert "--out" in capsys.readouterr().err
