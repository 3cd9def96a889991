import json
import os

import numpy as np
import pytest

from circlehj import cli, selftest
from circlehj.config import load_config, parse_config_text
from circlehj.errors import ConfigError
from circlehj.model import constant_drift_model
from circlehj.reporting import emit_plot_script

CD_CFG = """
model.family = quadratic
model.a = 1
model.b = 1
model.V = 0
model.lambda = 0.5
grid.n = 256
evolve.dt = 0.001
evolve.T = 0.5
evolve.snapshot_every = 0.1
evolve.phi = 0.05 - 0.05*cos(2*pi*x)
"""


@pytest.fixture()
def cd_cfg_path(tmp_path):
    path = tmp_path / "cd.cfg"
    path.write_text(CD_CFG)
    return str(path)


def manifest_of(out_dir):
    with open(os.path.join(out_dir, "manifest")) as fh:
        return json.load(fh)


# -------------------------------------------------------------------- config

def test_config_defaults_and_parse():
    cfg = parse_config_text(CD_CFG)
    assert cfg.get("model", "lambda") == 0.5
    assert cfg.get("grid", "n") == 256
    assert cfg.get("caps", "U_cap") == 50.0  # untouched default
    assert cfg.get("evolve", "phi").startswith("0.05")


def test_config_rejects_unknown_key():
    with pytest.raises(ConfigError):
        parse_config_text("model.lambduh = 0.5\n")
    with pytest.raises(ConfigError):
        parse_config_text("nosection = 3\n")


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        parse_config_text("grid.n = -4\n")
    with pytest.raises(ConfigError):
        parse_config_text("evolve.dt = zero\n")


def test_config_lambda_list_and_jobs():
    cfg = parse_config_text("bifurcate.lambdas = -0.4,-0.2,0,0.2\njobs = 3\n")
    assert cfg.get("bifurcate", "lambdas") == [-0.4, -0.2, 0.0, 0.2]
    assert cfg.get("run", "jobs") == 3


def test_config_hash_stable(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text(CD_CFG)
    assert load_config(p).hash() == load_config(p).hash()


# ------------------------------------------------------------------ commands

def test_orbit_command_and_determinism(cd_cfg_path, tmp_path):
    out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
    assert cli.main(["orbit", "--config", cd_cfg_path, "--out", out1]) == 0
    assert cli.main(["orbit", "--config", cd_cfg_path, "--out", out2]) == 0
    with open(os.path.join(out1, "orbit.csv"), "rb") as fh:
        first = fh.read()
    with open(os.path.join(out2, "orbit.csv"), "rb") as fh:
        second = fh.read()
    assert first == second
    assert first.splitlines()[0] == b"x,t,p,u,B,f"
    meta = manifest_of(out1)
    assert meta["exit_status"] == 0
    assert meta["period"] == pytest.approx(1.0, abs=1e-8)
    for name in meta["files"]:
        assert os.path.exists(os.path.join(out1, name))


def test_check_model_failure_exit_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model.lambda = -0.5\n")
    out = str(tmp_path / "out")
    assert cli.main(["check-model", "--config", str(cfg), "--out", out]) == 2
    assert manifest_of(out)["exit_status"] == 2


def test_config_error_exit_4(tmp_path):
    cfg = tmp_path / "typo.cfg"
    cfg.write_text("model.lambduh = 0.5\n")
    out = str(tmp_path / "out")
    assert cli.main(["orbit", "--config", str(cfg), "--out", out]) == 4
    assert manifest_of(out)["exit_status"] == 4
    missing = str(tmp_path / "gone")
    assert cli.main(["orbit", "--config", str(tmp_path / "nope.cfg"),
                     "--out", missing]) == 4


def test_evolve_command_with_plot(cd_cfg_path, tmp_path):
    out = str(tmp_path / "ev")
    assert cli.main(["evolve", "--config", cd_cfg_path, "--out", out,
                     "--plot"]) == 0
    meta = manifest_of(out)
    assert set(meta["files"]) >= {"trace.csv", "trace_supnorm.csv",
                                  "field.csv", "plot.gp"}
    with open(os.path.join(out, "plot.gp")) as fh:
        script = fh.read()
    assert "trace_supnorm.csv" in script
    with open(os.path.join(out, "trace.csv")) as fh:
        assert fh.readline().strip() == "t,x,value"


def test_weak_kam_command(cd_cfg_path, tmp_path):
    out = str(tmp_path / "wk")
    assert cli.main(["weak-kam", "--config", cd_cfg_path, "--out", out]) == 0
    with open(os.path.join(out, "weak_kam.json")) as fh:
        report = json.load(fh)
    assert float(report["sup_gap"]) <= 1e-6
    u_plus = np.loadtxt(os.path.join(out, "u_plus.csv"), delimiter=",",
                        skiprows=1)
    assert np.max(np.abs(u_plus[:, 1])) <= 1e-6


def test_action_command(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text(CD_CFG + "action.x = 0.5\naction.t = 0.5\n")
    out = str(tmp_path / "act")
    assert cli.main(["action", "--config", str(cfg), "--out", out]) == 0
    with open(os.path.join(out, "action.json")) as fh:
        report = json.load(fh)
    assert abs(float(report["shooting_value"])) <= 1e-8
    assert abs(float(report["grid_value"])) <= 2e-2


def test_subsolution_command(cd_cfg_path, tmp_path):
    out = str(tmp_path / "sub")
    assert cli.main(["subsolution", "--config", cd_cfg_path, "--out", out]) == 0
    with open(os.path.join(out, "subsolution.json")) as fh:
        report = json.load(fh)
    assert float(report["epsilon"]) == pytest.approx(0.0126651, abs=1e-6)
    assert float(report["max_residual"]) <= 1e-6


def test_periodic_command(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text(CD_CFG.replace("grid.n = 256", "grid.n = 128")
                   + "periodic.slices = 16\n")
    out = str(tmp_path / "per")
    assert cli.main(["periodic", "--config", str(cfg), "--out", out,
                     "--plot"]) == 0
    with open(os.path.join(out, "periodic.json")) as fh:
        report = json.load(fh)
    assert float(report["period_residual"]) <= 5e-3
    assert float(report["amplitude"]) > 0.0
    with open(os.path.join(out, "plot.gp")) as fh:
        assert "periodic.csv" in fh.read()


def test_trichotomy_command(tmp_path):
    cfg = tmp_path / "t.cfg"
    cfg.write_text(CD_CFG + "trichotomy.phi = 0.1\ntrichotomy.T_budget = 10\n")
    out = str(tmp_path / "tri")
    assert cli.main(["trichotomy", "--config", str(cfg), "--out", out]) == 0
    with open(os.path.join(out, "trichotomy.json")) as fh:
        report = json.load(fh)
    assert report["class"] == "D3_plus_infinity"
    assert report["confirmed"] is True


def test_bifurcate_command(tmp_path):
    cfg = tmp_path / "b.cfg"
    cfg.write_text("model.lambda = 0.5\nbifurcate.lambdas = -0.2,0,0.2\n"
                   "bifurcate.grid_n = 128\njobs = 2\n")
    out = str(tmp_path / "bif")
    assert cli.main(["bifurcate", "--config", str(cfg), "--out", out,
                     "--plot"]) == 0
    rows = {}
    with open(os.path.join(out, "bifurcation.csv")) as fh:
        assert fh.readline().strip() == "lambda,class,amplitude,period,min_abs_B"
        for line in fh:
            cells = line.strip().split(",")
            rows[float(cells[0])] = cells[1]
    assert rows == {-0.2: "fixed_point", 0.0: "degenerate", 0.2: "periodic"}


def test_normalize_c_flag(tmp_path):
    cfg = tmp_path / "n.cfg"
    cfg.write_text(CD_CFG)
    out = str(tmp_path / "norm")
    assert cli.main(["orbit", "--config", str(cfg), "--out", out,
                     "--normalize-c"]) == 0
    meta = manifest_of(out)
    assert abs(meta["normalized_c"]) <= 1e-3  # already normalized family
    assert meta["period"] == pytest.approx(1.0, abs=1e-6)


# ------------------------------------------------------------------ selftest

def test_selftest_fast_passes(capsys):
    assert selftest.run_selftest("fast") == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "[FAIL]" not in out


def test_selftest_seeded_fault_names_h4():
    import dataclasses
    cd = constant_drift_model(1.0, 0.5)
    broken = dataclasses.replace(cd, d_u=lambda x, p, u: -cd.d_u(x, p, u))
    ok, detail = selftest.check_h4_margin(broken)
    assert not ok
    assert "H4" in detail


def test_plot_script_requires_csv(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_script(str(tmp_path), "orbit", [])
