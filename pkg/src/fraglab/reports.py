"""Report tables and their CSV / JSON serialisation.

A report is a list of flat rows (plot-ready) plus a metadata dict. Files are
named ``<scenario>_<report>.{csv,json}``. Output is byte-deterministic: JSON
keys are sorted, floats use ``repr`` and non-finite numbers become ``null``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

FORMATS = ("csv", "json")


@dataclass
class Report:
    name: str
    rows: list[dict]
    meta: dict = field(default_factory=dict)

    @property
    def columns(self) -> list[str]:
        cols: list[str] = []
        for r in self.rows:
            for c in r:
                if c not in cols:
                    cols.append(c)
        return cols

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.rows]

    def where(self, **match) -> list[dict]:
        return [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]


@dataclass
class ReportBundle:
    scenario: str
    reports: dict[str, Report] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)

    def add(self, name: str, rows: list[dict], **meta) -> Report:
        rep = Report(name, rows, meta)
        self.reports[name] = rep
        return rep

    def __getitem__(self, name: str) -> Report:
        return self.reports[name]

    @property
    def all_checks_pass(self) -> bool:
        return all(self.checks.values())

    def summary(self) -> dict:
        return {"scenario": self.scenario, "reports": sorted(self.reports), "checks": dict(self.checks),
                "all_checks_pass": self.all_checks_pass}


def jsonable(obj: Any) -> Any:
    """Plain-Python copy of ``obj`` with NaN/inf mapped to ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ""
    return str(v)


def write_csv(rows: list[dict], path: Path, columns: list[str] | None = None) -> None:
    if columns is None:
        columns = Report("", rows).columns
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])


def write_report(scenario: str, rep: Report, out: Path, formats: Iterable[str] = FORMATS) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        path = out / f"{scenario}_{rep.name}.{fmt}"
        if fmt == "csv":
            write_csv(rep.rows, path)
        elif fmt == "json":
            path.write_text(dumps({"scenario": scenario, "report": rep.name, "meta": rep.meta, "rows": rep.rows}),
                            encoding="utf-8")
        else:
            raise ValueError(f"unknown format {fmt!r}")
        written.append(path)
    return written


def write_bundle(bundle: ReportBundle, out, formats: Iterable[str] = FORMATS) -> list[Path]:
    """Write every report plus a ``<scenario>_summary.json`` with the checks."""
    out = Path(out)
    formats = list(formats)
    written = []
    for name in sorted(bundle.reports):
        written += write_report(bundle.scenario, bundle.reports[name], out, formats)
    path = out / f"{bundle.scenario}_summary.json"
    path.write_text(dumps(bundle.summary()), encoding="utf-8")
    written.append(path)
    return written
