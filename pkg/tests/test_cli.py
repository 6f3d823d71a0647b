import subprocess
import sys

import numpy as np
import pytest

from sphere_sh import DriftParams, NoiseModel, SchemeConfig, SpectralSpace, run_trajectory
from sphere_sh.cli import main, read_timeseries, write_timeseries
from sphere_sh.diagnostics import TrajectoryDiagnostics

HEADER = "t,eta,energy_Y,norm_V,norm_L2n,x_norm"


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("J = 8\nK = 8\nf1.modes = (1,2):0.5, (2,2):0.25\nT = 0.001\ndt = 1e-4\n"
                 "ell_levels = 2.5, 8\npaths = 3\n")
    return p


def run(*args):
    return main([str(a) for a in args])


def test_verify_defaults(tmp_path, capsys):
    p = tmp_path / "min.cfg"
    p.write_text("f1.modes = (1,2):0.5\n")
    assert run("verify", "--config", p, "--out", tmp_path / "o") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 8
    assert all(line.split()[-1] == "PASS" for line in lines)
    assert {line.split()[0] for line in lines} == {
        "lemm_1", "lemm_prf", "lemm_2", "lemm_3",
        "enrgy_lmma_3", "enrgy_lmma_4", "enrgy_lmma_5", "enrgy_lmma_6"}


def test_verify_failure_exit_code(tmp_path, capsys):
    p = tmp_path / "strict.cfg"
    p.write_text("J = 8\nK = 8\nverify_tol = 1e-300\nverify_samples = 2\n")
    assert run("verify", "--config", p, "--out", tmp_path / "o") == 3
    assert "FAIL" in capsys.readouterr().out


def test_simulate_deterministic(tmp_path, cfg):
    assert run("simulate", "--config", cfg, "--out", tmp_path / "a", "--quiet") == 0
    assert run("simulate", "--config", cfg, "--out", tmp_path / "b", "--quiet") == 0
    a = (tmp_path / "a" / "simulate.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulate.csv").read_bytes()
    assert a.decode().splitlines()[0] == HEADER
    assert "# tau_hit ell=2.5 t=0" in a.decode()
    assert (tmp_path / "a" / "simulate.csv.plot").exists()
    assert (tmp_path / "a" / "final_state.txt").exists()
    run("simulate", "--config", cfg, "--out", tmp_path / "c", "--quiet", "--seed", 99)
    assert a != (tmp_path / "c" / "simulate.csv").read_bytes()


def test_convergence_needs_three_levels(tmp_path, cfg, capsys):
    text = cfg.read_text() + "dt_levels = 2\n"
    cfg.write_text(text)
    assert run("convergence", "--config", cfg, "--out", tmp_path / "o") == 2
    assert ">= 3" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("scheme = heun_strat\ndt = 1e-4\nT = 1e-3\n")
    assert run("simulate", "--config", p) == 2
    assert "mu_max" in capsys.readouterr().err
    assert run("simulate", "--config", tmp_path / "missing.cfg") == 2


def test_ensemble_failure_exit_4(tmp_path, capsys):
    p = tmp_path / "boom.cfg"
    p.write_text("J = 4\nK = 4\nu0.modes = (1,1):1, (4,4):1\ndt = 0.01\nT = 1\npaths = 2\n"
                 "f1.modes = (1,1):50\npicard_T = 0.02\n")
    assert run("ensemble", "--config", p, "--out", tmp_path / "o", "--quiet") == 4
    assert "overflow" in (tmp_path / "o" / "ensemble_status.txt").read_text()


@pytest.mark.parametrize("command,files", [
    ("ensemble", ["ensemble.csv", "ensemble_status.txt"]),
    ("convergence", ["convergence.csv"]),
    ("picard", ["picard.csv"]),
    ("khashminskii", ["khashminskii.txt"]),
])
def test_subcommands_write_outputs(tmp_path, cfg, command, files):
    assert run(command, "--config", cfg, "--out", tmp_path / "o", "--quiet") == 0
    for name in files:
        assert (tmp_path / "o" / name).stat().st_size > 0


def test_timeseries_empty(tmp_path):
    p = tmp_path / "e.csv"
    write_timeseries(TrajectoryDiagnostics(), p)
    assert p.read_text() == HEADER + "\n"
    assert read_timeseries(p)["t"].size == 0


def test_timeseries_one_record(tmp_path):
    sp = SpectralSpace(4, 4)
    d = TrajectoryDiagnostics()
    d.append(0.0, sp.mode(1, 1), 1, 3.0)
    d.tau_hits = {2.0: 0.0, 9.0: None}
    p = tmp_path / "one.csv"
    write_timeseries(d, p)
    lines = p.read_text().splitlines()
    assert lines[0] == HEADER and len(lines) == 3
    assert lines[2] == "# tau_hit ell=2 t=0"


def test_timeseries_round_trip(tmp_path):
    sp = SpectralSpace(6, 6)
    d = run_trajectory(sp.mode(1, 1) * 0.9 + sp.mode(2, 1) * 0.1, 0.01, DriftParams(),
                       SchemeConfig(dt=1e-3, seed=1), NoiseModel([sp.mode(1, 2)]))
    p = tmp_path / "rt.csv"
    write_timeseries(d, p)
    back = read_timeseries(p)
    for k, v in d.as_arrays().items():
        assert np.array_equal(back["t" if k == "times" else k], v)


def test_write_error_names_path(tmp_path):
    with pytest.raises(OSError, match="nodir"):
        write_timeseries(TrajectoryDiagnostics(), tmp_path / "nodir" / "x.csv")


def test_module_entry_point(tmp_path, cfg):
    r = subprocess.run([sys.executable, "-m", "sphere_sh", "picard", "--config", str(cfg),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0 and "picard:" in r.stdout
