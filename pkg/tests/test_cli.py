import csv
import json
import shutil
import subprocess
import time

import pytest

from tabrobust.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_DATA, EXIT_OK, main

FAST = ["--synthetic", "300,6,1.0,1", "--epochs", "2", "--hidden", "8", "--eps-steps", "4",
        "--explain-samples", "10", "--background", "5", "--permutations", "5"]


def run(tmp_path, *args, out="out"):
    return main([*args, *FAST, "--out", str(tmp_path / out)])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_selftest_passes(capsys):
    t0 = time.perf_counter()
    assert main(["selftest"]) == EXIT_OK
    assert time.perf_counter() - t0 < 60
    out = capsys.readouterr().out
    assert "[FAIL]" not in out and out.count("[PASS]") >= 4


def test_selftest_detects_injected_fault(capsys):
    assert main(["selftest", "--inject-fault"]) == EXIT_CHECK
    assert "[FAIL]" in capsys.readouterr().out


def test_missing_data_file(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")])
    assert code == EXIT_DATA
    assert "no such file" in capsys.readouterr().err


def test_bad_csv_is_data_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,label\n1,x\nfoo,y\n", encoding="utf-8")
    assert main(["train", "--data", str(bad), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_train_seed_is_reproducible(tmp_path):
    assert run(tmp_path, "train", "--seed", "7", out="a") == EXIT_OK
    assert run(tmp_path, "train", "--seed", "7", out="b") == EXIT_OK
    a = (tmp_path / "a" / "model_seed7.json").read_bytes()
    assert a == (tmp_path / "b" / "model_seed7.json").read_bytes()
    assert len(read_csv(tmp_path / "a" / "history_seed7.csv")) == 3


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 9, "eps_max": 0.2, "seeds": [4]}), encoding="utf-8")
    assert run(tmp_path, "train", "--config", str(cfg), "--eps-max", "0.25") == EXIT_OK
    eff = json.loads((tmp_path / "out" / "effective_config.json").read_text(encoding="utf-8"))
    assert eff["epochs"] == 2  # flag beats file
    assert eff["eps_max"] == 0.25
    assert eff["seeds"] == [4]  # file beats default


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epoch": 3}), encoding="utf-8")
    assert run(tmp_path, "train", "--config", str(cfg)) == EXIT_CONFIG


@pytest.mark.parametrize("args", [["--eps-steps", "1"], ["--attack", "cw"], ["--adv-frac", "2"],
                                  ["--split", "1.5"]])
def test_config_errors(tmp_path, args):
    assert main(["sweep", *FAST, *args, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_no_data_source(tmp_path):
    assert main(["train", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_exact_needs_few_features(tmp_path, capsys):
    code = main(["explain", *FAST, "--synthetic", "300,13,1.0", "--exact", "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "12" in capsys.readouterr().err


def test_sweep_outputs(tmp_path):
    assert run(tmp_path, "sweep", "--seeds", "0,1") == EXIT_OK
    out = tmp_path / "out"
    for kind in ("fgsm", "pgd"):
        for tag in ("seed0", "seed1", "mean"):
            assert len(read_csv(out / f"curve_{kind}_{tag}.csv")) == 5
    rep = json.loads((out / "sweep_report.json").read_text(encoding="utf-8"))
    assert len(rep["curves"]) == 6
    assert rep["sensitivity"] is None
    assert read_csv(out / "metrics.csv")[0] == ["metric", "value", "epsilon", "attack"]


def test_explain_outputs(tmp_path):
    assert run(tmp_path, "explain", "--top-k", "3") == EXIT_OK
    out = tmp_path / "out"
    assert len(read_csv(out / "sensitivity.csv")) == 7
    grid = read_csv(out / "drift_grid.csv")
    assert len(grid) == 5 and len(grid[0]) == 4
    rep = json.loads((out / "explain_report.json").read_text(encoding="utf-8"))
    assert rep["drift"]["delta_phi_epsilon"] == 0.1 and rep["drift"]["attack"] == "FGSM"


def test_ablation_outputs(tmp_path):
    assert run(tmp_path, "ablation", "--seeds", "0") == EXIT_OK
    out = tmp_path / "out"
    table = read_csv(out / "ablation_table.csv")
    assert table[0] == ["Dataset", "Model", "CleanAcc", "RI_FGSM", "RI_PGD", "DeltaRI"]
    assert [r[1] for r in table[1:]] == ["Baseline", "Adv-Trained"]
    assert (out / "ablation_baseline_pgd.csv").exists()
    assert run(tmp_path, "ablation", "--seeds", "0", "--baseline-only", out="b") == EXIT_OK
    assert len(read_csv(tmp_path / "b" / "ablation_table.csv")) == 2


def test_run_is_byte_reproducible(tmp_path):
    assert run(tmp_path, "run", "--seeds", "0", out="a") == EXIT_OK
    assert run(tmp_path, "run", "--seeds", "0", out="b") == EXIT_OK
    a, b = tmp_path / "a", tmp_path / "b"
    for name in ("report.json", "drift_grid.csv", "ablation_table.csv", "metrics.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TABROBUST_OUT", str(tmp_path / "env"))
    assert main(["train", *FAST, "--seed", "0"]) == EXIT_OK
    assert (tmp_path / "env" / "model_seed0.json").exists()


@pytest.mark.skipif(shutil.which("tabrobust") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["tabrobust", "selftest"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    proc = subprocess.run(["tabrobust", "sweep", *FAST, "--eps-steps", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 2
