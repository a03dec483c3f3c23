import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from envdamp.cli import main
from envdamp.harness import FitRegistry, read_results_csv

from test_harness import THETAS


@pytest.fixture
def fits(tmp_path):
    reg = FitRegistry()
    for form, theta in THETAS.items():
        reg.set_theta("scenario1", 1, form, theta)
    path = tmp_path / "fits.json"
    reg.save(path)
    return path


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "config_version": 1,
        "scenario": {"n_trials": 2, "n_recordings": 5, "snr_grid_db": [20, 30]},
        "training": {"n_records": 30, "split": [20, 10], "n_restarts": 2, "n_grid_seeds": 1,
                     "n_prescan": 8, "max_iters": 30},
    }))
    return path


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("ENVDAMP_SEED", raising=False)


def test_estimate_noiseless_fixture(capsys):
    assert main(["estimate", "--fixture", "noiseless"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("zeta_hat=1.0000%")


def test_estimate_json_with_fits(capsys, fits):
    rc = main(["estimate", "--fixture", "noiseless", "--form", "welch_window",
               "--fits", str(fits), "--json"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["theta"] == THETAS["welch_window"]
    assert doc["zeta_hat"] == pytest.approx(0.01, abs=5e-5)


def test_estimate_needs_theta_for_other_forms(capsys):
    assert main(["estimate", "--fixture", "noiseless", "--form", "rect_window"]) == 1
    assert "envdamp: error:" in capsys.readouterr().err


def test_dry_run_prints_plan(capsys, small_config, tmp_path):
    rc = main(["sweep", "--config", str(small_config), "--seed", "4", "--dry-run",
               "--fits", str(tmp_path / "absent.json"), "--methods", "gaussian_window,pp"])
    assert rc == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["study"] == "sweep" and plan["seed"] == 4
    assert plan["n_rows"] == 2 * 2 * 2
    assert not (tmp_path / "absent.json").exists()


def test_sweep_writes_outputs_byte_identical(capsys, small_config, fits, tmp_path):
    outs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / name
        rc = main(["sweep", "--config", str(small_config), "--fits", str(fits), "--out", str(out),
                   "--methods", "gaussian_window,triangle_window,pp", "--workers", workers])
        assert rc == 0
        outs.append(out)
    first = (outs[0] / "results.csv").read_bytes()
    assert all((o / "results.csv").read_bytes() == first for o in outs[1:])
    with (outs[0] / "results.csv").open() as fh:
        header = next(csv.reader(fh))
    assert header == ["scenario", "method", "snr_db", "trial", "zeta_hat", "valid", "wall_ms"]
    assert len(read_results_csv(outs[0] / "results.csv")) == 3 * 2 * 2
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert summary["meta"]["seed"] == 0
    assert {c["method"] for c in summary["cells"]} == {"gaussian_window", "triangle_window", "pp"}


def test_compare_and_interfere(capsys, small_config, fits, tmp_path):
    assert main(["compare", "--config", str(small_config), "--fits", str(fits),
                 "--out", str(tmp_path / "cmp"), "--trials", "1", "--timing"]) == 0
    rows = read_results_csv(tmp_path / "cmp" / "results.csv")
    assert {r.method for r in rows} >= {"gaussian_window", "lsrf", "plscf", "pp", "yoshida"}
    assert all(r.wall_ms is not None for r in rows)
    assert main(["interfere", "--config", str(small_config), "--fits", str(fits),
                 "--out", str(tmp_path / "ifr"), "--trials", "1", "--recordings", "4",
                 "--methods", "gaussian_window"]) == 0
    rows = read_results_csv(tmp_path / "ifr" / "results.csv")
    assert len(rows) == 10 * 2


def test_missing_registry_is_error(capsys, tmp_path):
    rc = main(["sweep", "--fits", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "run `envdamp optimize` first" in capsys.readouterr().err


def test_bad_config_is_error(capsys, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"config_version": 1, "scenario": {"n_trail": 3}}))
    assert main(["sweep", "--config", str(cfg), "--dry-run"]) == 1
    assert "n_trail" in capsys.readouterr().err


def test_usage_errors_exit_2(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["sweep", "--trials", "many"]) == 2
    assert main([]) == 2


def test_env_seed_and_override(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv("ENVDAMP_SEED", "5")
    assert main(["sweep", "--dry-run"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 5
    assert main(["sweep", "--dry-run", "--seed", "9"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 9


def test_generate_and_estimate_records(capsys, small_config, tmp_path):
    out = tmp_path / "ds.npz"
    assert main(["generate", "--config", str(small_config), "--out", str(out),
                 "--n-records", "12"]) == 0
    data = np.load(out)
    assert data["records"].shape[0] == 12
    assert main(["estimate", "--records", str(out), "--freq", "15.56"]) == 0
    assert capsys.readouterr().out.count("zeta_hat=") == 1
    assert main(["estimate", "--records", str(out)]) == 1


def test_optimize_all_forms(capsys, small_config, tmp_path):
    out = tmp_path / "fits.json"
    assert main(["optimize", "--config", str(small_config), "--forms", "all",
                 "--out", str(out)]) == 0
    reg = FitRegistry.load(out)
    assert len(reg) == 9
    assert all(e["theta_opt"] > 0 for e in reg.entries.values())
    traces = (tmp_path / "fits_traces.csv").read_text().splitlines()
    assert len(traces) == 1 + 9 * 2
    assert main(["optimize", "--config", str(small_config), "--forms", "lsrf",
                 "--out", str(out)]) == 1


def test_console_script_entry_point(tmp_path):
    env = dict(os.environ, ENVDAMP_SEED="3")
    proc = subprocess.run([sys.executable, "-m", "envdamp.cli", "compare", "--dry-run"],
                          capture_output=True, text=True, env=env, cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["seed"] == 3
