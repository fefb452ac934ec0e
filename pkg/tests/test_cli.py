import csv
import json

import numpy as np
import pytest

from interpretabnet.cli import main
from interpretabnet.synthetic import credit_like, determinative, write_credit_like

from oracles import credit_recode_counts

CHEAP = """\
[arch]
n_steps = 2
n_d = 4
n_a = 4
n_shared = 1
n_independent = 1
[pretrain]
batch = 64
virtual_batch = 32
max_epochs = 2
[train]
batch = 64
virtual_batch = 32
max_epochs = 3
[stability]
k_models = 3
subset_sizes = 40, 60
"""


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A determinative-feature CSV split once, trained once, shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    (root / "cheap.ini").write_text(CHEAP)
    x, y = determinative(400, n_noise=3, seed=0)
    with open(root / "toy.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["signal", "n1", "n2", "n3", "y"])
        w.writerows([list(r) + [int(t)] for r, t in zip(x, y)])
    cfg = root / "cheap.ini"
    assert _run("preprocess", "--config", cfg, "--input", root / "toy.csv", "--label", "y", "--out", root) == 0
    assert _run("train", "--config", cfg, "--out", root) == 0
    return root


def test_preprocess_credit_like(tmp_path):
    src = write_credit_like(str(tmp_path / "credit.csv"), n=1000, n_pos=221, seed=1)
    out = tmp_path / "a"
    assert _run("preprocess", "--input", src, "--cleaner", "credit", "--out", out) == 0
    report = json.loads((out / "preprocess_report.json").read_text())
    assert [report["splits"][s]["rows"] for s in ("train", "val", "test")] == [700, 100, 200]
    header, table = credit_like(1000, 221, seed=1)
    assert report["recoded"] == credit_recode_counts(header, table.tolist())
    assert "ID" not in report["columns"] and "PAY_1" in report["columns"]
    again = tmp_path / "b"
    _run("preprocess", "--input", src, "--cleaner", "credit", "--out", again)
    for name in ("train.csv", "val.csv", "test.csv", "preprocess_report.json"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_train_report_and_config(workspace):
    metrics = json.loads((workspace / "metrics.json").read_text())
    assert {"accuracy", "auc", "epochs", "stop_reason"} <= set(metrics)
    assert metrics["epochs"] == 3
    assert (workspace / "config.ini").exists() and (workspace / "model.ckpt").exists()


def test_warm_start_changes_first_loss(workspace, tmp_path):
    cfg = workspace / "cheap.ini"
    assert _run("pretrain", "--config", cfg, "--splits", workspace, "--out", tmp_path / "pre") == 0
    _run("train", "--config", cfg, "--splits", workspace, "--out", tmp_path / "cold")
    _run("train", "--config", cfg, "--splits", workspace, "--out", tmp_path / "warm",
         "--init", tmp_path / "pre" / "pretrain.ckpt")
    first = [json.loads((tmp_path / d / "train_log.jsonl").read_text().splitlines()[0])["train_loss"]
             for d in ("cold", "warm")]
    assert first[0] != first[1]
    assert json.loads((tmp_path / "warm" / "metrics.json").read_text())["warm_start"] is True


def test_importance_and_reorder(workspace, tmp_path):
    out = tmp_path / "imp"
    assert _run("importance", "--checkpoint", workspace / "model.ckpt", "--splits", workspace,
                "--reorder", "--out", out) == 0
    imp = json.loads((out / "importance.json").read_text())
    assert abs(sum(imp["scores"]) - 1.0) <= 1e-9
    with open(out / "reordered.csv") as fh:
        first = next(csv.reader(fh))[0]
    assert first == imp["feature_names"][int(np.argmax(imp["scores"]))]
    assert (out / "importance.ppm").read_bytes().startswith(b"P6")


def test_pfi_ranks_signal_first(workspace, tmp_path):
    out = tmp_path / "pfi"
    assert _run("pfi", "--checkpoint", workspace / "model.ckpt", "--splits", workspace, "--out", out) == 0
    report = json.loads((out / "pfi.json").read_text())
    assert report["ranking"][0] == "signal"


def test_stability_subsets(workspace, tmp_path):
    out = tmp_path / "stab"
    assert _run("stability", "--config", workspace / "cheap.ini", "--splits", workspace, "--out", out) == 0
    assert sorted(p.name for p in out.glob("heatmap_*.ppm")) == ["heatmap_40.ppm", "heatmap_60.ppm"]
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    for row in rows:
        props = [float(v) for k, v in row.items() if k.startswith("[")] + [float(row["odd"])]
        assert abs(sum(props) - 1.0) <= 5e-4  # four-decimal rounding in the table
    for size in (40, 60):
        rep = json.loads((out / f"stability_{size}.json").read_text())
        assert abs(sum(rep["bin_proportions"]) + rep["odd_proportion"] - 1.0) <= 1e-9


def test_stability_from_importance_tables(tmp_path):
    table = tmp_path / "rf.csv"
    table.write_text("model_id,a,b,c\nm0,0.5,0.3,0.2\nm1,0.6,0.3,0.1\nm2,0.5,0.35,0.15\n")
    assert _run("stability", "--importances", table, "--label", "rf", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "stability_table.json").read_text())
    assert rep["corr"][0][0] == 1.0 and len(rep["corr"]) == 3


def test_baseline_command(workspace, tmp_path):
    assert _run("baseline", "--splits", workspace, "--out", tmp_path) == 0
    imp = json.loads((tmp_path / "baseline_importance.json").read_text())
    assert int(np.argmax(imp["scores"])) == 0


def test_exit_codes(workspace, tmp_path, capsys):
    assert _run("importance", "--checkpoint", tmp_path / "missing.ckpt", "--splits", workspace,
                "--out", tmp_path) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[arch]\nn_step = 3\n")
    assert _run("train", "--config", bad, "--out", tmp_path) == 1
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1
    assert _run("train", "--splits", tmp_path / "nowhere", "--out", tmp_path) == 2
    assert "error:" in capsys.readouterr().err


def test_schema_mismatch_names_columns(workspace, tmp_path, capsys):
    other = tmp_path / "other.csv"
    other.write_text("signal,n1,n2,zzz,y\n0,0,0,0,1\n1,1,1,1,0\n")
    code = _run("importance", "--checkpoint", workspace / "model.ckpt", "--data", other, "--out", tmp_path)
    assert code == 2
    err = capsys.readouterr().err
    assert "n3" in err and "zzz" in err


def test_env_var_sets_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("INTERPRETABNET_OUT", str(tmp_path / "envout"))
    assert _run("preprocess", "--input", "bundled:iris") == 0
    assert (tmp_path / "envout" / "train.csv").exists()


def test_seed_flag_overrides_config(tmp_path):
    assert _run("preprocess", "--input", "bundled:iris", "--seed", "4", "--out", tmp_path) == 0
    assert "seed = 4" in (tmp_path / "config.ini").read_text()
