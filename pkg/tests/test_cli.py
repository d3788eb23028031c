import json
import subprocess
import sys

import pytest

from fraglab.cli import main

SMALL = {
    "name": "cli",
    "dgp": {"n_users": 200, "n_devices": 2, "beta0": 1.0, "beta1": [0.4],
            "exposure": {"family": "poisson", "mean": 2.0}, "seed": 1},
    "strata": {"MSA": 5},
    "mc_reps": 20,
}


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "cli.json"
    p.write_text(json.dumps(SMALL))
    return p


def run(*argv):
    return main([str(a) for a in argv])


def test_table1_scenario_outputs(tmp_path, capsys):
    assert run("scenario", "table1", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "PASS panel_b_slope_0.4" in out
    rows = json.loads((tmp_path / "table1_estimates.json").read_text())["rows"]
    slopes = {r["panel"]: r["estimate"] for r in rows if r["term"] == "x1"}
    assert slopes["b"] == pytest.approx(0.4, abs=1e-12) and slopes["c"] == pytest.approx(-0.4, abs=1e-12)
    assert (tmp_path / "table1_estimates.png").exists()


@pytest.mark.parametrize("cmd", [
    ["simulate"], ["fragment"], ["fragment", "--no-oracle"], ["estimate"], ["bias"], ["montecarlo", "--reps", "10"],
    ["aggregate"], ["debias", "--force"], ["diagnose"], ["sweep-mixed"], ["scenario"],
])
def test_subcommands_succeed(cmd, cfg, tmp_path):
    assert run(*cmd, "--config", cfg, "--out", tmp_path / "o", "--no-plots") == 0


def test_file_inputs(cfg, tmp_path):
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 0
    assert run("fragment", "--config", cfg, "--out", tmp_path) == 0
    assert run("estimate", "--population", tmp_path / "cli_population.csv", "--out", tmp_path, "--no-plots") == 0
    assert run("estimate", "--fragments", tmp_path / "cli_fragments.csv", "--form", "device-split",
               "--out", tmp_path, "--no-plots") == 0
    assert run("aggregate", "--fragments", tmp_path / "cli_fragments.csv", "--out", tmp_path,
               "--format", "csv", "--no-plots") == 0
    assert (tmp_path / "cli_fragments_aggregate.csv").exists()
    assert not (tmp_path / "cli_fragments_aggregate.json").exists()


def test_seed_flag_changes_output(cfg, tmp_path):
    run("simulate", "--config", cfg, "--out", tmp_path / "a")
    run("simulate", "--config", cfg, "--out", tmp_path / "b", "--seed", "2")
    run("simulate", "--config", cfg, "--out", tmp_path / "c")
    a, b, c = (tmp_path / d / "cli_population.csv" for d in "abc")
    assert a.read_bytes() == c.read_bytes() != b.read_bytes()


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["simulate"],
    ["simulate", "--config", "missing.json"],
    ["simulate", "--config", "{cfg}", "--seed", "-3"],
    ["montecarlo", "--config", "{cfg}", "--reps", "0"],
    ["scenario", "nope"],
    ["estimate", "--unknown"],
    ["estimate"],
])
def test_validation_errors_exit_1(argv, cfg, tmp_path):
    argv = [a.replace("{cfg}", str(cfg)) for a in argv]
    assert run(*argv) == 1


def test_debias_refused_exits_1(tmp_path, capsys):
    cfg = {**SMALL, "dgp": {**SMALL["dgp"], "exposure": {"family": "poisson", "mean": [3.0, 1.0]}}}
    p = tmp_path / "asym.json"
    p.write_text(json.dumps(cfg))
    assert run("debias", "--config", p, "--out", tmp_path, "--no-plots") == 1
    assert "symmetric treatment condition violated" in capsys.readouterr().err


def test_singular_design_exits_2(tmp_path, capsys):
    p = tmp_path / "frag.csv"
    p.write_text("fragment_id,device,y,x1\n1,1,1.0,2\n2,2,0.0,2\n3,1,1.0,2\n4,2,0.0,2\n")
    assert run("estimate", "--fragments", p, "--out", tmp_path) == 2
    assert "numerical error" in capsys.readouterr().err


def test_help_and_list(capsys):
    assert run("--help") == 0
    assert run("scenario", "--list") == 0
    assert "oracle-suite" in capsys.readouterr().out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "fraglab", "scenario", "--list"], capture_output=True, text=True)
    assert r.returncode == 0 and "table1" in r.stdout
