import json
import math

import numpy as np
import pytest

from qtraj.cli import main
from qtraj.photonstats import poisson_stream


def _read(path):
    return path.read_text()


# --- exit codes -------------------------------------------------------------

def test_missing_config_file_is_config_error(tmp_path):
    rc = main(["simulate", "--config", str(tmp_path / "nope.json"),
               "--model", "driven", "--out", str(tmp_path / "o")])
    assert rc == 2


def test_missing_model_is_config_error(tmp_path):
    rc = main(["simulate", "--out", str(tmp_path / "o")])
    assert rc == 2


def test_numerical_failure_exit_code(tmp_path):
    # no light/dark timescale separation at this configuration
    rc = main(["darkstats", "--model", "two_atom_eigen", "--omega-rabi", "6",
               "--delta-diff", "46.4", "--v", "19.3", "--gamma12", "0.18",
               "--out", str(tmp_path / "o")])
    assert rc == 3


def test_oversized_step_exit_code(tmp_path):
    rc = main(["simulate", "--model", "driven", "--omega-rabi", "5",
               "--dt", "0.5", "--t-final", "2", "--initial", "excited",
               "--out", str(tmp_path / "o")])
    assert rc == 3


def test_bad_initial_state_is_config_error(tmp_path):
    rc = main(["simulate", "--model", "driven", "--initial", "1,0,0",
               "--out", str(tmp_path / "o")])
    assert rc == 2


# --- reproducibility --------------------------------------------------------

def test_simulate_outputs_and_determinism(tmp_path):
    args = ["simulate", "--model", "driven", "--omega-rabi", "3",
            "--t-final", "10", "--dt", "0.001", "--seed", "4"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert _read(out1 / "trajectory.csv") == _read(out2 / "trajectory.csv")
    assert _read(out1 / "jumps.csv") == _read(out2 / "jumps.csv")
    manifest = json.loads(_read(out1 / "manifest.json"))
    assert manifest["config"]["seed"] == 4
    assert "trajectory.csv" in manifest["outputs"]
    assert "units" in manifest


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "model": {"model": "driven", "omega_rabi": 2.0},
        "t_final": 5.0, "dt": 0.001, "seed": 1,
    }))
    out = tmp_path / "o"
    rc = main(["simulate", "--config", str(cfg), "--omega-rabi", "3",
               "--out", str(out)])
    assert rc == 0
    manifest = json.loads(_read(out / "manifest.json"))
    assert manifest["config"]["model"]["omega_rabi"] == 3.0  # flag wins
    assert manifest["config"]["t_final"] == 5.0  # config survives


# --- command outputs --------------------------------------------------------

def test_ensemble_command(tmp_path):
    out = tmp_path / "o"
    rc = main(["ensemble", "--model", "driven", "--omega-rabi", "3",
               "--t-final", "2", "--dt", "0.002", "--n-traj", "25",
               "--seed", "1", "--sample-every", "100", "--out", str(out)])
    assert rc == 0
    rows = _read(out / "ensemble.csv").strip().splitlines()
    header = rows[0].split(",")
    assert header == ["time", "mean_pop_e", "mean_pop_g"]
    for row in rows[1:]:
        vals = [float(x) for x in row.split(",")[1:]]
        assert abs(sum(vals) - 1.0) < 1e-8


def test_steadyscan_command(tmp_path):
    out = tmp_path / "o"
    rc = main(["steadyscan", "--model", "two_atom_eigen", "--omega-rabi", "6",
               "--delta-diff", "46.4", "--v", "19.3", "--gamma12", "0.18",
               "--delta-min", "-5", "--delta-max", "5", "--delta-steps", "11",
               "--out", str(out)])
    assert rc == 0
    rows = _read(out / "scan.csv").strip().splitlines()
    assert len(rows) == 12
    manifest = json.loads(_read(out / "manifest.json"))
    assert abs(manifest["derived"]["lambda"] - 30.178) < 1e-3
    assert abs(manifest["derived"]["gamma_s"] - 1.18) < 1e-12


def test_g2_on_synthetic_stream(tmp_path):
    stream = poisson_stream(1.0, 50000.0, seed=3)
    spath = tmp_path / "stream.txt"
    spath.write_text("\n".join(f"{t:.9f}" for t in stream.timestamps) + "\n")
    out = tmp_path / "o"
    rc = main(["g2", "--stream", str(spath), "--dtd", "0.5",
               "--tau-max", "8", "--out", str(out)])
    assert rc == 0
    rows = _read(out / "g2.csv").strip().splitlines()[1:]
    vals = np.array([float(r.split(",")[1]) for r in rows])
    assert abs(vals.mean() - 1.0) < 0.05  # coherent light stays flat


def test_g2_simulated_with_analytic_overlay(tmp_path):
    out = tmp_path / "o"
    rc = main(["g2", "--model", "driven", "--omega-rabi", "5",
               "--t-final", "2000", "--seed", "9", "--tau-max", "5",
               "--out", str(out)])
    assert rc == 0
    assert (out / "g2_analytic.csv").exists()
    assert (out / "stream.txt").exists()


def test_darkstats_command(tmp_path):
    lam = math.hypot(1.0, 10.0)
    out = tmp_path / "o"
    rc = main(["darkstats", "--model", "two_atom_eigen", "--omega-rabi", "5",
               "--delta-diff", "2", "--v", "10", "--gamma12", "1",
               "--delta-total", str(-lam), "--out", str(out)])
    assert rc == 0
    doc = json.loads(_read(out / "darkstats.json"))
    assert abs(doc["t_apex"] - 110.4) < 0.1
    assert abs(doc["t_dark"] - 42920.6) < 1.0


def test_darkstats_antisymmetric_resonance_flag(tmp_path):
    out = tmp_path / "o"
    rc = main(["darkstats", "--model", "two_atom_eigen", "--omega-rabi", "5",
               "--delta-diff", "2", "--v", "10", "--gamma12", "1",
               "--antisymmetric-resonance", "--out", str(out)])
    assert rc == 0
    doc = json.loads(_read(out / "darkstats.json"))
    assert abs(doc["t_apex"] - 110.4) < 0.1


def test_heatmap_command(tmp_path):
    out = tmp_path / "o"
    rc = main(["heatmap", "--omega-rabi", "5", "--gamma12", "1",
               "--v-min", "5", "--v-max", "20", "--v-steps", "3",
               "--delta-min", "1", "--delta-max", "2", "--delta-steps", "2",
               "--out", str(out)])
    assert rc == 0
    for stat in ("t_apex", "t_dark", "tau_light", "n_light", "t_light"):
        assert (out / f"heatmap_{stat}.csv").exists()
    manifest = json.loads(_read(out / "manifest.json"))
    assert manifest["config"]["failed_cells"] == []
