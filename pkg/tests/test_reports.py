import json
import math

import numpy as np

from fraglab.plotting import render_bundle
from fraglab.reports import ReportBundle, dumps, jsonable, write_bundle
from fraglab.scenarios import run_builtin


def test_jsonable_maps_non_finite_to_null():
    out = jsonable({"a": np.float64("nan"), "b": [np.inf, 1.5], "c": np.int64(3), "d": np.bool_(True),
                    "e": np.arange(2)})
    assert out == {"a": None, "b": [None, 1.5], "c": 3, "d": True, "e": [0, 1]}
    assert json.loads(dumps({"x": float("nan")})) == {"x": None}


def test_csv_cells(tmp_path):
    b = ReportBundle("t")
    b.add("r", [{"x": 0.1, "y": float("nan"), "ok": True}, {"x": 1.0, "z": "s"}])
    b.checks["fine"] = True
    paths = write_bundle(b, tmp_path)
    assert [p.name for p in paths] == ["t_r.csv", "t_r.json", "t_summary.json"]
    assert (tmp_path / "t_r.csv").read_text() == "x,y,ok,z\n0.1,,true,\n1.0,,,s\n"
    assert json.loads((tmp_path / "t_summary.json").read_text())["all_checks_pass"] is True
    assert [p.name for p in write_bundle(b, tmp_path / "j", ["json"])] == ["t_r.json", "t_summary.json"]


def test_json_round_trip_preserves_floats(tmp_path):
    b = ReportBundle("t")
    v = 0.1 + 0.2
    b.add("r", [{"v": v}], note="m")
    write_bundle(b, tmp_path)
    data = json.loads((tmp_path / "t_r.json").read_text())
    assert data["rows"][0]["v"] == v and data["meta"] == {"note": "m"}
    assert float((tmp_path / "t_r.csv").read_text().splitlines()[1]) == v


def test_plots_are_byte_identical(tmp_path):
    b = run_builtin("table1")
    a = render_bundle(b, tmp_path / "a")
    c = render_bundle(b, tmp_path / "c")
    assert [p.name for p in a] == ["table1_estimates.png"]
    assert a[0].read_bytes() == c[0].read_bytes()
    assert a[0].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_every_builtin_report_kind_renders(tmp_path):
    b = run_builtin("mixed-sweep")
    assert [p.name for p in render_bundle(b, tmp_path)] == ["mixed-sweep_sweep.png"]
    b = run_builtin("randomization-lambda-sweep", mc_reps=20)
    assert len(render_bundle(b, tmp_path)) == 1
    assert not math.isnan(b["bias_vs_lambda"].rows[0]["mc_se"])
