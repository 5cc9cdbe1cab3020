"""End-to-end command-line checks via subprocess."""
from __future__ import annotations

import csv
import json
import os
import subprocess
import sys

SRC = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src")


def run_cli(*args, cwd=None):
    env = dict(os.environ)
    env["PYTHONPATH"] = SRC + os.pathsep + env.get("PYTHONPATH", "")
    return subprocess.run(
        [sys.executable, "-m", "salt", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
        env=env,
    )


def tiny_config(tmp_path, **extra):
    cfg = {
        "method": "SALT",
        "seed": 0,
        "epochs": 2,
        "batch_size": 20,
        "outdir": str(tmp_path / "run"),
        "dataset": {"kind": "two_moons", "n_train": 40, "n_test": 30, "noise_std": 0.1},
        "model": {"layers": [2, 8, 2]},
        "adv": {"alpha": 1.0, "epsilon": 1.0, "eta": 0.5, "sigma": 0.1, "k_steps": 1},
    }
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_train_runs_and_reports(tmp_path):
    cfg = tiny_config(tmp_path)
    proc = run_cli("train", "--config", str(cfg))
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.strip().splitlines()
    final = json.loads(lines[0])
    assert final["epoch"] == 2
    assert "val_acc" in final
    assert lines[1].startswith("metrics: ")
    assert os.path.exists(lines[1].split(": ", 1)[1])
    assert lines[2].startswith("checkpoint: ")


def test_train_outdir_override(tmp_path):
    cfg = tiny_config(tmp_path)
    other = tmp_path / "elsewhere"
    proc = run_cli("train", "--config", str(cfg), "--outdir", str(other))
    assert proc.returncode == 0, proc.stderr
    assert (other / "metrics.jsonl").exists()


def test_train_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"verbose": True}))
    proc = run_cli("train", "--config", str(path))
    assert proc.returncode == 2
    assert "error:" in proc.stderr
    assert "verbose" in proc.stderr


def test_train_rejects_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{oops")
    proc = run_cli("train", "--config", str(path))
    assert proc.returncode == 2
    assert "not valid JSON" in proc.stderr


def test_train_is_deterministic(tmp_path):
    cfg = tiny_config(tmp_path)
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert run_cli("train", "--config", str(cfg), "--outdir", str(a)).returncode == 0
    assert run_cli("train", "--config", str(cfg), "--outdir", str(b)).returncode == 0
    assert (a / "metrics.jsonl").read_bytes() == (b / "metrics.jsonl").read_bytes()


def test_gradcheck_passes_and_prints_per_instance(tmp_path):
    proc = run_cli("gradcheck", "--instances", "3", "--seed", "0")
    assert proc.returncode == 0, proc.stdout + proc.stderr
    lines = proc.stdout.strip().splitlines()
    assert len(lines) == 4
    for i, line in enumerate(lines[:3]):
        assert line.startswith(f"instance {i:02d} ")
        assert "rel_err=" in line
    assert lines[-1].startswith("gradcheck: max rel_err")
    assert lines[-1].endswith("PASS")


def test_gradcheck_fixed_k(tmp_path):
    proc = run_cli("gradcheck", "--instances", "2", "--k", "1", "--seed", "3")
    assert proc.returncode == 0
    for line in proc.stdout.strip().splitlines()[:2]:
        assert "k=1" in line


def test_sweep_writes_summary(tmp_path):
    cfg = tiny_config(tmp_path, epochs=1)
    out = tmp_path / "sweep.csv"
    proc = run_cli(
        "sweep",
        "--config",
        str(cfg),
        "--axis",
        "k_steps",
        "--values",
        "0,1",
        "--seeds",
        "0,1",
        "--out",
        str(out),
    )
    assert proc.returncode == 0, proc.stderr
    assert "4 rows" in proc.stdout
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["axis_value", "seed", "final_train_loss", "final_val_loss", "final_val_acc", "ece"]
    assert len(rows) == 5


def test_sweep_rejects_unknown_axis(tmp_path):
    cfg = tiny_config(tmp_path)
    proc = run_cli("sweep", "--config", str(cfg), "--axis", "sigma", "--values", "0.1")
    assert proc.returncode == 2  # argparse choices reject it
    assert "sigma" in proc.stderr


def test_calibrate_reports_and_writes(tmp_path):
    preds = tmp_path / "preds.csv"
    preds.write_text("confidence,correct\n0.75,1\n0.75,0\n0.95,1\n0.95,1\n")
    out = tmp_path / "rel.csv"
    proc = run_cli("calibrate", "--predictions", str(preds), "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("n=4 ece=0.15")
    assert out.exists()
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10
    assert sum(int(r["count"]) for r in rows) == 4


def test_calibrate_equal_mass(tmp_path):
    preds = tmp_path / "preds.csv"
    lines = ["confidence,correct"] + [f"0.{50 + i},{i % 2}" for i in range(40)]
    preds.write_text("\n".join(lines) + "\n")
    out = tmp_path / "rel.csv"
    proc = run_cli(
        "calibrate", "--predictions", str(preds), "--out", str(out), "--bins", "4", "--equal-mass-bins"
    )
    assert proc.returncode == 0, proc.stderr
    with open(out, newline="") as fh:
        counts = [int(r["count"]) for r in csv.DictReader(fh)]
    assert sum(counts) == 40
    assert len(counts) == 4


def test_calibrate_bad_file(tmp_path):
    preds = tmp_path / "preds.csv"
    preds.write_text("conf,correct\n0.9,1\n")
    proc = run_cli("calibrate", "--predictions", str(preds))
    assert proc.returncode == 2
    assert "confidence" in proc.stderr


def test_no_subcommand_is_an_error():
    proc = run_cli()
    assert proc.returncode == 2
    assert "train" in proc.stderr
