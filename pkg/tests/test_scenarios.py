import json

import numpy as np
import pytest

from fraglab.errors import ConfigError, SingularDesignError
from fraglab.reports import write_bundle
from fraglab.scenarios import BUILTINS, ScenarioConfig, run_builtin, run_scenario

SMALL = {
    "name": "small",
    "dgp": {"n_users": 300, "n_devices": 2, "n_covariates": 2, "beta0": 1.0, "beta1": [0.4, 0.1],
            "exposure": {"family": "poisson", "mean": 2.0}, "seed": 5},
    "forms": ["common-stacked", "device-specific-stacked", "device-split"],
    "strata": {"MSA": 6},
    "mc_reps": 50,
    "correctives": ["aggregate", "debias", "sweep-mixed"],
    "r_grid": [0.0, 0.5],
}


def test_generic_scenario_reports():
    b = run_scenario(ScenarioConfig.from_dict(SMALL))
    for name in ("estimates", "bias", "montecarlo", "stc", "diagnose", "aggregate", "sweep"):
        assert name in b.reports, name
    assert {r["form"] for r in b["montecarlo"].rows} == set(SMALL["forms"])
    # debias is either produced or skipped with a reason, never silent
    assert b["debias"].rows or "skipped" in b["debias"].meta


def test_generic_scenario_is_deterministic(tmp_path):
    a = run_scenario(ScenarioConfig.from_dict(SMALL))
    b = run_scenario(ScenarioConfig.from_dict(SMALL))
    pa = write_bundle(a, tmp_path / "a")
    pb = write_bundle(b, tmp_path / "b")
    assert [p.name for p in pa] == [p.name for p in pb]
    for x, y in zip(pa, pb):
        assert x.read_bytes() == y.read_bytes(), x.name


def test_seed_override_changes_output():
    a = run_scenario(ScenarioConfig.from_dict(SMALL))
    b = run_scenario(ScenarioConfig.from_dict({**SMALL, "seed": 99}))
    assert a["estimates"].rows != b["estimates"].rows


def test_table1_builtin():
    b = run_builtin("table1")
    assert b.all_checks_pass
    slopes = {r["panel"]: r["estimate"] for r in b["estimates"].rows if r["term"] == "x1"}
    assert slopes["b"] == pytest.approx(0.4, abs=1e-12) and slopes["c"] == pytest.approx(-0.4, abs=1e-12)


def test_mixed_builtin():
    assert run_builtin("mixed-sweep").all_checks_pass


def test_builtin_registry_and_errors():
    assert set(BUILTINS) >= {"table1", "randomization-lambda-sweep", "stc-J2", "stc-J3", "stc-J5",
                             "activity-analog", "mixed-sweep", "oracle-suite"}
    with pytest.raises(ConfigError):
        run_builtin("nope")
    with pytest.raises(ConfigError):
        ScenarioConfig("nope")


@pytest.mark.parametrize("patch, field", [
    ({"forms": ["pooled"]}, "forms"),
    ({"correctives": ["magic"]}, "correctives"),
    ({"mc_reps": 0}, "mc_reps"),
    ({"r_grid": [1.5]}, "r_grid"),
    ({"seed": -1}, None),
    ({"bogus": 1}, "scenario"),
])
def test_config_validation(patch, field):
    with pytest.raises((ConfigError, ValueError)):
        ScenarioConfig.from_dict({**SMALL, **patch})


def test_load_config_files(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({k: v for k, v in SMALL.items() if k != "name"}))
    assert ScenarioConfig.load(p).name == "s"
    flat = tmp_path / "flat.json"
    flat.write_text(json.dumps({**SMALL["dgp"], "strata": {"R": 3}, "mc_reps": 2}))
    cfg = ScenarioConfig.load(flat)
    assert cfg.dgp.n_users == 300 and cfg.strata == {"R": 3} and cfg.mc_reps == 2


@pytest.mark.parametrize("text", ["{", "[1, 2]"])
def test_load_bad_json(tmp_path, text):
    p = tmp_path / "bad.json"
    p.write_text(text)
    with pytest.raises(ConfigError):
        ScenarioConfig.load(p)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        ScenarioConfig.load(tmp_path / "none.json")


def test_errors_carry_scenario_name():
    cfg = ScenarioConfig.from_dict({**SMALL, "dgp": {**SMALL["dgp"], "exposure": {"family": "poisson", "mean": 0.0}},
                                    "correctives": []})
    with pytest.raises(SingularDesignError, match="scenario 'small'"):
        run_scenario(cfg)
