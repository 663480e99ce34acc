import os

import pytest

from ricciflow.cli import main, parse_config, ConfigError


def run_cli(*args):
    return main(list(args))


# --- configuration -----------------------------------------------------------

def test_defaults():
    cfg = parse_config(command="simulate")
    assert cfg["surface.kind"] == "torus"
    assert cfg["surface.resolution"] == 64
    assert cfg["flow.integrator"] == "rk4"
    assert cfg["flow.dt"] == 1e-3
    assert cfg["flow.t_end"] == 1.0


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="flow.dtt"):
        parse_config(sets=["flow.dtt=1"])


def test_constraint_violation_names_key():
    with pytest.raises(ConfigError, match="flow.dt"):
        parse_config(sets=["flow.dt=-1"])
    with pytest.raises(ConfigError, match="flow.cfl_safety"):
        parse_config(sets=["flow.cfl_safety=2"])


def test_type_mismatch_is_named():
    with pytest.raises(ConfigError, match="surface.resolution"):
        parse_config(sets=["surface.resolution=tiny"])


def test_flag_overrides_file(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("flow.dt = 0.01\nsurface.resolution = 16\n")
    cfg = parse_config(str(cfgfile), sets=["flow.dt=0.005"])
    assert cfg["flow.dt"] == 0.005
    assert cfg["surface.resolution"] == 16
    assert cfg.was_set("flow.dt") and cfg.was_set("surface.resolution")
    assert not cfg.was_set("flow.t_end")


def test_config_file_syntax_error(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("flow.dt 0.01\n")
    with pytest.raises(ConfigError):
        parse_config(str(bad))


def test_missing_config_file():
    assert run_cli("simulate", "--config", "/nonexistent.cfg") == 1


# --- commands ------------------------------------------------------------------

def test_simulate_defaults_small(tmp_path):
    out = tmp_path / "run"
    rc = run_cli("simulate", "--set", "surface.resolution=16",
                 "--set", "initial.band_limit=4", "--set", "flow.t_end=0.05",
                 "--out", str(out))
    assert rc == 0
    diag = out / "diagnostics.csv"
    assert diag.exists()
    lines = diag.read_text().splitlines()
    assert len(lines) >= 3            # header + at least 2 rows
    assert lines[0].startswith("t,volume,energy")
    assert (out / "trajectory.csv").exists()
    assert (out / "run_metadata.txt").exists()


def test_simulate_blowup_exit_code(tmp_path):
    out = tmp_path / "boom"
    rc = run_cli("simulate", "--set", "surface.resolution=16",
                 "--set", "initial.band_limit=4",
                 "--set", "initial.amplitude=40", "--out", str(out))
    assert rc == 2
    assert (out / "blowup_note.txt").exists()
    assert (out / "diagnostics.csv").exists()     # partial outputs written


def test_unknown_command_is_usage_error():
    assert run_cli("dance") == 1


def test_uniqueness_command(tmp_path):
    out = tmp_path / "uniq"
    rc = run_cli("uniqueness", "--set", "surface.resolution=32",
                 "--set", "flow.t_end=0.2",
                 "--set", "experiment.dt_levels=5e-3,2.5e-3",
                 "--set", "experiment.t_ladder=0.1,0.05",
                 "--out", str(out), "--plots")
    assert rc == 0
    summary = (out / "uniqueness_summary.csv").read_text().splitlines()
    assert "delta" in summary[0].split(",")
    assert len(summary) == 3
    assert (out / "delta_vs_T.svg").exists()


def test_convergence_command(tmp_path):
    out = tmp_path / "conv"
    rc = run_cli("convergence", "--set", "surface.resolution=32",
                 "--set", "initial.amplitude=0.3", "--set", "initial.band_limit=5",
                 "--set", "flow.t_end=0.4", "--out", str(out))
    assert rc == 0
    text = (out / "convergence_fit.txt").read_text()
    assert "status = ok" in text


def test_manufactured_command(tmp_path):
    out = tmp_path / "mms"
    rc = run_cli("manufactured", "--set", "surface.resolution=16",
                 "--out", str(out))
    assert rc == 0
    text = (out / "manufactured_orders.txt").read_text()
    assert "rk4.slope" in text and "imex1.slope" in text


def test_inequalities_command(tmp_path):
    out = tmp_path / "ineq"
    rc = run_cli("inequalities", "--set", "surface.resolution=32",
                 "--set", "experiment.resolutions=32",
                 "--out", str(out))
    assert rc == 0
    lines = (out / "inequalities.csv").read_text().splitlines()
    assert lines[0] == "resolution,gn_max,tm_max,sobolev_constant,exp_moments_finite"


def test_rerun_is_byte_identical(tmp_path):
    outs = []
    for sub in ("r1", "r2"):
        out = tmp_path / sub
        rc = run_cli("simulate", "--set", "surface.resolution=16",
                     "--set", "initial.band_limit=4",
                     "--set", "flow.t_end=0.05", "--out", str(out))
        assert rc == 0
        outs.append(out)
    for name in ("diagnostics.csv", "trajectory.csv", "run_metadata.txt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_ricci_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("RICCI_THREADS", "2")
    out = tmp_path / "threads"
    rc = run_cli("simulate", "--set", "surface.resolution=16",
                 "--set", "initial.band_limit=4",
                 "--set", "flow.t_end=0.02", "--out", str(out))
    assert rc == 0
