"""Scenario configs, the generic experiment pipeline and the built-in scenario library.

``run_scenario`` returns a :class:`~fraglab.reports.ReportBundle`; nothing is
written to disk here. Every random draw is keyed off the scenario seed, so a
rerun with the same config reproduces the bundle exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import biascalc
from .correctives import aggregate_strata, debias_stc, estimate_aggregated, sweep_mixed
from .biascalc import STCReport
from .datagen import (
    DGPConfig,
    ExposureSpec,
    Population,
    PreferenceSpec,
    attach_strata,
    from_exposures,
    generate_population,
)
from .errors import ConfigError, FraglabError, STCViolation
from .estimators import EstimateReport, estimate_fragmented, estimate_true
from .fragmentation import FORMS, AssignmentMatrix, FragmentedDataset, draw_assignment, fragment
from .montecarlo import MCFixture, MCReport, random_fixtures, run_monte_carlo
from .reports import ReportBundle
from .rng import check_seed, substream
from .tolerances import DEFAULT, Tolerances

CORRECTIVES = ("debias", "aggregate", "sweep-mixed")
DEFAULT_R_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass
class ScenarioConfig:
    """One experiment.

    With ``dgp=None`` the name must be a built-in scenario, which then runs at
    its default size (``seed`` and ``mc_reps`` still apply when given).
    ``mc_reps`` of 1 fits a single realisation; 2 or more also runs the
    fixed-exposure Monte Carlo oracle for every form.
    """

    name: str
    dgp: DGPConfig | None = None
    forms: list[str] = field(default_factory=lambda: ["common-stacked"])
    strata: dict = field(default_factory=dict)
    correctives: list[str] = field(default_factory=list)
    mc_reps: int | None = None
    tolerances: dict = field(default_factory=dict)
    out: str | None = None
    r_grid: list[float] = field(default_factory=lambda: list(DEFAULT_R_GRID))
    aggregate_vars: list[str] | None = None
    assignment_seed: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name.strip():
            raise ConfigError("scenario name must be a nonempty string", field="name")
        if self.mc_reps is not None and (int(self.mc_reps) != self.mc_reps or self.mc_reps < 1):
            raise ConfigError("mc_reps must be an integer >= 1", field="mc_reps")
        for form in self.forms:
            if form not in FORMS:
                raise ConfigError(f"unknown form {form!r}; expected one of {FORMS}", field="forms")
        for c in self.correctives:
            if c not in CORRECTIVES:
                raise ConfigError(f"unknown corrective {c!r}; expected one of {CORRECTIVES}", field="correctives")
        if any(not 0.0 <= r <= 1.0 for r in self.r_grid):
            raise ConfigError("r_grid values must lie in [0, 1]", field="r_grid")
        if self.seed is not None:
            check_seed(self.seed)
        if self.dgp is None and self.name not in BUILTINS:
            raise ConfigError(f"no dgp given and {self.name!r} is not a built-in scenario", field="dgp")
        DEFAULT.updated(self.tolerances)

    @property
    def tol(self) -> Tolerances:
        return DEFAULT.updated(self.tolerances)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScenarioConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown key(s) {sorted(unknown)}", field="scenario")
        if "name" not in d:
            raise ConfigError("missing scenario name", field="name")
        if d.get("dgp") is not None and not isinstance(d["dgp"], DGPConfig):
            if not isinstance(d["dgp"], Mapping):
                raise ConfigError("dgp must be a mapping", field="dgp")
            d["dgp"] = DGPConfig.from_dict(d["dgp"])
        for key in ("forms", "correctives", "r_grid"):
            if key in d and isinstance(d[key], str):
                d[key] = [d[key]]
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}", field="config") from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}", field="config") from None
        if not isinstance(d, dict):
            raise ConfigError("config root must be an object", field="config")
        if "dgp" not in d and "n_users" in d:
            # flat file: a bare data-generating config plus optional scenario keys
            own = set(cls.__dataclass_fields__) - {"dgp"}
            d = {**{k: v for k, v in d.items() if k in own}, "dgp": {k: v for k, v in d.items() if k not in own}}
        if "name" not in d:
            d["name"] = path.stem
        return cls.from_dict(d)


def _rep_seed(seed: int, rep: int) -> int:
    """Independent 63-bit seed for replication ``rep``."""
    return int(substream(seed, "mc-rep", rep).integers(0, 2**63))


def estimate_rows(label: str, rep: EstimateReport | list[EstimateReport], **extra) -> list[dict]:
    reps = rep if isinstance(rep, list) else [rep]
    rows = []
    for r in reps:
        for row in r.rows():
            rows.append({"estimator": label, "form": r.model_form, **extra, **row})
    return rows


def _mc_rows(rep: MCReport, **extra) -> list[dict]:
    return [{**extra, **row} for row in rep.rows()]


# ---------------------------------------------------------------------------
# generic pipeline


@dataclass
class Experiment:
    """A realised scenario: population, assignment and fragments."""

    cfg: ScenarioConfig
    dgp: DGPConfig
    pop: Population
    a: AssignmentMatrix
    f: FragmentedDataset

    @property
    def common(self) -> bool:
        return self.dgp.model_form == "common"

    @property
    def tol(self) -> Tolerances:
        return self.cfg.tol


def build(cfg: ScenarioConfig) -> Experiment:
    if cfg.dgp is None:
        raise ConfigError("this operation needs a dgp section in the config", field="dgp")
    dgp = cfg.dgp if cfg.seed is None else replace(cfg.dgp, seed=cfg.seed)
    pop = attach_strata(generate_population(dgp), cfg.strata)
    a = draw_assignment(pop, seed=cfg.assignment_seed)
    return Experiment(cfg, dgp, pop, a, fragment(pop, a))


def add_estimates(bundle: ReportBundle, ex: Experiment) -> dict:
    tol = ex.tol
    rows = estimate_rows("true", estimate_true(ex.pop, "common" if ex.common else "device-specific", tol))
    fits = {}
    for form in ex.cfg.forms:
        fits[form] = estimate_fragmented(ex.f, form, tol)
        rows += estimate_rows("fragmented", fits[form])
    bundle.add("estimates", rows, n_users=ex.pop.n_users, n_devices=ex.pop.n_devices, seed=ex.dgp.seed)
    return fits


def _fixtures(ex: Experiment) -> dict[str, MCFixture]:
    forms = [f for f in ex.cfg.forms if ex.common or f != "common-stacked"]
    if not forms:
        raise ConfigError("common-stacked bias needs common-effect truth", field="forms")
    return {form: MCFixture.from_population(ex.pop, form, name=ex.cfg.name) for form in forms}


def add_bias(bundle: ReportBundle, ex: Experiment) -> None:
    rows = []
    for form, fix in _fixtures(ex).items():
        dec = fix.analytic()
        for d in dec if isinstance(dec, list) else [dec]:
            rows += [{"form": form, **r} for r in d.rows()]
        terms, expected = fix.expected_slopes()
        for t, e in zip(terms, expected):
            for r in rows:
                if r["form"] == form and r["term"] == t:
                    r["expected_estimate"] = float(e)
    bundle.add("bias", rows, lambda_source="oracle")


def add_montecarlo(bundle: ReportBundle, ex: Experiment, M: int) -> None:
    rows = []
    for form, fix in _fixtures(ex).items():
        rep = run_monte_carlo(fix, M, ex.dgp.seed, tol=ex.tol)
        rows += _mc_rows(rep)
        bundle.checks[f"montecarlo_{form}"] = rep.all_pass
    bundle.add("montecarlo", rows, M=M, z_threshold=ex.tol.mc_z)


def add_diagnose(bundle: ReportBundle, ex: Experiment) -> STCReport:
    stc = biascalc.check_stc(ex.pop, ex.tol)
    bundle.add("stc", [stc.to_dict()])
    rows = []
    for d in biascalc.correlation_diagnostic(ex.f):
        for j, row in enumerate(d.matrix):
            rows.append({"covariate": d.covariate, "outcome_device": j + 1,
                         **{f"exposure_d{l + 1}": float(v) for l, v in enumerate(row)},
                         "proportionality": d.proportionality, "flag": d.flag})
    bundle.add("diagnose", rows)
    return stc


def add_debias(bundle: ReportBundle, ex: Experiment, *, force: bool = False) -> None:
    """Raises :class:`STCViolation` when the condition fails and ``force`` is off."""
    if not ex.common:
        raise ConfigError("debiasing needs common-effect truth", field="dgp")
    tol = ex.tol
    stc = biascalc.check_stc(ex.pop, tol)
    raw = estimate_fragmented(ex.f, "common-stacked", tol)
    deb = debias_stc(raw, ex.pop.n_devices, stc, force=force, matched=estimate_true(ex.pop, "common", tol))
    bundle.add("debias", estimate_rows("debiased", deb.as_estimate()), stc=stc.verdict, forced=force,
               J_used=deb.J_used, ci_inflation_vs_matched=deb.ci_inflation_vs_matched)


def add_aggregate(bundle: ReportBundle, ex: Experiment) -> None:
    variables = ex.cfg.aggregate_vars or sorted(ex.pop.strata)
    if not variables:
        raise ConfigError("aggregation needs strata; add a strata section", field="strata")
    agg = aggregate_strata(ex.f, variables)
    form = "common" if ex.common else "device-specific"
    bundle.add("aggregate", estimate_rows("aggregated", estimate_aggregated(agg, form, tol=ex.tol)),
               variables=variables, n_bins=agg.n_bins)


def add_sweep(bundle: ReportBundle, ex: Experiment) -> None:
    table = sweep_mixed(ex.pop, ex.a, ex.cfg.r_grid, tol=ex.tol)
    bundle.add("sweep", table.rows(), max_identity_residual=float(np.max(table.identity_residual)))
    bundle.checks["mixed_identity"] = bool(np.all(table.identity_residual <= ex.tol.mixed_identity))


def _run_generic(cfg: ScenarioConfig) -> ReportBundle:
    ex = build(cfg)
    bundle = ReportBundle(cfg.name)
    add_estimates(bundle, ex)
    add_bias(bundle, ex)
    if (cfg.mc_reps or 1) >= 2:
        add_montecarlo(bundle, ex, cfg.mc_reps)
    add_diagnose(bundle, ex)
    if "debias" in cfg.correctives:
        try:
            add_debias(bundle, ex)
        except STCViolation as exc:
            bundle.add("debias", [], skipped=str(exc))
    if "aggregate" in cfg.correctives:
        add_aggregate(bundle, ex)
    if "sweep-mixed" in cfg.correctives:
        add_sweep(bundle, ex)
    return bundle


# ---------------------------------------------------------------------------
# built-in scenarios

TABLE1_SPLITS = {"b": [[2.0, 3.0], [0.0, 1.0]], "c": [[0.0, 1.0], [2.0, 3.0]]}


def table1_population(panel: str = "b"):
    """Two users with total ads 2 and 4, null effect (y = 1), device-1 exposures per ``panel``."""
    X = np.asarray(TABLE1_SPLITS[panel])[:, :, None]
    return from_exposures(X, beta0=1.0, beta1=[0.0], lam=[1.0, 0.0])


def scenario_table1(seed: int = 0, mc_reps: int | None = None, tol: Tolerances = DEFAULT) -> ReportBundle:
    bundle = ReportBundle("table1")
    pop = table1_population("b")
    rows = estimate_rows("true", estimate_true(pop, "common", tol), panel="a")
    bias_rows = []
    for panel in ("b", "c"):
        pop = table1_population(panel)
        f = fragment(pop, AssignmentMatrix.constant(pop.n_users, 0, 2), seed=seed)
        rep = estimate_fragmented(f, "common-stacked", tol)
        rows += estimate_rows("fragmented", rep, panel=panel)
        dec = biascalc.bias_common(pop.X[0], pop.X[1], [1.0, 1.0], 1.0, [0.0])
        bias_rows.append({"panel": panel, "vartheta": float(dec.vartheta[0, 0]), "delta1": float(dec.delta1[0]),
                          "delta2": float(dec.delta2[0]), "delta3": float(dec.delta3[0]),
                          "analytic_slope": float(dec.total[0]), "estimated_slope": rep.coef("x1")})
    bundle.add("estimates", rows)
    bundle.add("bias", bias_rows)
    est = bundle["estimates"]
    slope = {r["panel"]: r["estimate"] for r in est.rows if r["term"] == "x1"}
    bundle.checks["panel_a_slope_zero"] = abs(slope["a"]) <= 1e-12
    bundle.checks["panel_b_slope_0.4"] = abs(slope["b"] - 0.4) <= 1e-12
    bundle.checks["panel_c_slope_-0.4"] = abs(slope["c"] + 0.4) <= 1e-12
    return bundle


RANDOMIZATION_LAMBDAS = (0.1, 0.2, 0.3, 0.375, 0.4, 0.5, 0.6, 0.7, 0.8, 0.875, 0.9)


def randomization_exposures(n: int) -> np.ndarray:
    """Independent two-point exposures with means 3 and 1 and second moments 10 and 2."""
    if n % 4:
        raise ConfigError("n must be a multiple of 4 for exact moments", field="n_users")
    x1 = np.repeat([2.0, 4.0], n // 2)
    x2 = np.tile([0.0, 2.0], n // 2)
    return np.stack([x1, x2])[:, :, None]


def scenario_randomization(seed: int = 0, mc_reps: int | None = None, tol: Tolerances = DEFAULT, *,
                           n: int = 10_000, beta1: float = 0.5, noise_sigma: float = 1.0) -> ReportBundle:
    M = mc_reps or 500
    X = randomization_exposures(n)
    mom = biascalc.scalar_moments(X[0, :, 0], X[1, :, 0], 0.5)
    rows = []
    for i, lam in enumerate(RANDOMIZATION_LAMBDAS):
        closed = (2 * lam - 7 / 4) * beta1
        scalar = biascalc.bias_common_scalar(mom, 0.0, beta1, lam=lam)
        dec = biascalc.bias_common(X[0], X[1], lam, 0.0, [beta1])
        fix = MCFixture(X, np.full(n, lam), 0.0, [[beta1], [beta1]], "common-stacked", noise_sigma, f"lambda={lam}")
        mc = run_monte_carlo(fix, M, seed + i, tol=tol)
        rows.append({
            "lambda": lam, "closed_form_bias": closed, "scalar_bias": scalar, "matrix_bias": float(dec.total[0]),
            "rel_err": abs(float(dec.total[0]) - closed) / abs(closed) if closed else abs(float(dec.total[0])),
            "mc_bias": float(mc.mc_mean[0] - beta1), "mc_se": float(mc.mc_se[0]), "z_score": float(mc.z_score[0]),
            "mc_estimate": float(mc.mc_mean[0]),
        })
    bundle = ReportBundle("randomization-lambda-sweep")
    bundle.add("bias_vs_lambda", rows, n_users=n, M=M, beta0=0.0, beta1=beta1)
    z = tol.mc_z
    bundle.checks["analytic_within_2pct"] = all(
        r["rel_err"] <= 0.02 for r in rows if r["closed_form_bias"] != 0)
    bundle.checks["mc_agrees"] = all(abs(r["z_score"]) <= z for r in rows)
    bundle.checks["estimate_negative_below_3/8"] = all(
        r["mc_estimate"] + z * r["mc_se"] < 0 for r in rows if r["lambda"] < 3 / 8)
    bundle.checks["estimate_positive_above_3/8"] = all(
        r["mc_estimate"] - z * r["mc_se"] > 0 for r in rows if r["lambda"] > 3 / 8)
    bundle.checks["bias_zero_at_7/8"] = all(
        abs(r["mc_bias"]) <= z * r["mc_se"] for r in rows if r["lambda"] == 7 / 8)
    bundle.checks["bias_sign_matches"] = all(
        np.sign(r["mc_bias"]) == np.sign(r["closed_form_bias"]) for r in rows if abs(r["lambda"] - 7 / 8) > 0.05)
    return bundle


def stc_dgp(J: int, n: int = 10_000, seed: int = 0, *, mean: float = 2.0, beta1: float = 0.5) -> DGPConfig:
    """Symmetric iid Poisson exposures across ``J`` devices and a uniform purchase device.

    The intercept centres the outcome, which keeps the split outcome's level
    out of the fragment-level residual.
    """
    return DGPConfig(n_users=n, n_devices=J, n_covariates=1, beta0=-beta1 * J * mean, beta1=[beta1],
                     exposure=ExposureSpec(family="poisson", mean=mean), noise_sigma=1.0,
                     preference=PreferenceSpec(kind="constant", lam=[1.0 / J] * J), seed=seed)


def scenario_stc(J: int, seed: int = 0, mc_reps: int | None = None, tol: Tolerances = DEFAULT, *,
                 n: int = 10_000, pilot_n: int = 200_000) -> ReportBundle:
    """Fresh exposures every replication; STC evidence from a large pilot draw."""
    M = mc_reps or 200
    base = stc_dgp(J, n, seed)
    beta1 = float(base.beta1[0])
    pilot_seed = int(substream(seed, "pilot").integers(0, 2**63))
    stc = biascalc.check_stc(generate_population(replace(base, n_users=pilot_n, seed=pilot_seed)), tol)
    rows = []
    for rep in range(M):
        pop = generate_population(replace(base, seed=_rep_seed(seed, rep)))
        f = fragment(pop, draw_assignment(pop))
        raw = estimate_fragmented(f, "common-stacked", tol)
        matched = estimate_true(pop, "common", tol)
        deb = debias_stc(raw, J, stc, matched=matched)
        s = raw.slope_index[0]
        rows.append({"rep": rep, "fragmented_slope": float(raw.coefficients[s]),
                     "debiased_slope": float(deb.debiased_coefficients[s]),
                     "matched_slope": matched.coef("x1"), "fragmented_se": float(raw.standard_errors[s]),
                     "debiased_se": float(deb.debiased_se[s]), "matched_se": matched.se("x1"),
                     "se_ratio": float(deb.ci_inflation_vs_matched[0])})
    frag = np.array([r["fragmented_slope"] for r in rows])
    deb = np.array([r["debiased_slope"] for r in rows])
    ratio = np.array([r["se_ratio"] for r in rows])
    summary = {
        "J": J, "M": M, "n_users": n, "beta1": beta1, "stc_verdict": stc.verdict,
        "mean_fragmented_slope": float(frag.mean()), "target_fragmented": beta1 / J,
        "fragmented_rel_err": float(abs(frag.mean() - beta1 / J) / (beta1 / J)),
        "fragmented_mc_se": float(frag.std(ddof=1) / np.sqrt(M)),
        "mean_debiased_slope": float(deb.mean()), "debiased_rel_err": float(abs(deb.mean() - beta1) / beta1),
        "min_se_ratio": float(ratio.min()), "se_ratio_floor": float(np.sqrt(J) - 0.05),
    }
    name = f"stc-J{J}"
    bundle = ReportBundle(name)
    bundle.add("replications", rows)
    bundle.add("summary", [summary], stc=stc.to_dict())
    bundle.checks["fragmented_within_1pct_of_beta/J"] = summary["fragmented_rel_err"] <= 0.01
    bundle.checks["debiased_within_1pct_of_beta"] = summary["debiased_rel_err"] <= 0.01
    bundle.checks["se_inflation_at_least_sqrtJ"] = summary["min_se_ratio"] >= summary["se_ratio_floor"]
    bundle.checks["stc_satisfied"] = stc.satisfied
    return bundle


ANALOG_STRATA = {"MSA": 48, "Age": {"range": [18, 82], "bucket": 5}, "Income": 10}


def analog_dgp(seed: int = 0, n: int = 30_000) -> DGPConfig:
    """Three ad channels on three devices with same-device activity bias."""
    return DGPConfig(
        n_users=n, n_devices=3, n_covariates=3, beta0=1.5, beta1=[0.25, 0.15, 0.05],
        exposure=ExposureSpec(family="poisson", mean=[[1.5, 0.6, 4.0], [1.0, 0.4, 3.0], [0.3, 0.1, 0.8]],
                              activity_coupling=0.95),
        noise_sigma=1.0,
        preference=PreferenceSpec(kind="heterogeneous", concentration=[0.25, 0.2, 0.08]),
        seed=seed,
    )


def _analog_fit(seed: int, tol: Tolerances):
    pop = attach_strata(generate_population(analog_dgp(seed)), ANALOG_STRATA)
    f = fragment(pop, draw_assignment(pop))
    true = estimate_true(pop, "common", tol)
    frag = estimate_fragmented(f, "common-stacked", tol)
    agg = estimate_aggregated(aggregate_strata(f, list(ANALOG_STRATA)), "common", tol=tol)
    return pop, f, true, frag, agg


def scenario_activity(seed: int = 0, mc_reps: int | None = None, tol: Tolerances = DEFAULT) -> ReportBundle:
    M = mc_reps or 100
    bundle = ReportBundle("activity-analog")
    pop, f, true, frag, agg = _analog_fit(seed, tol)
    bundle.add("estimates", estimate_rows("true", true) + estimate_rows("fragmented", frag)
               + estimate_rows("aggregated", agg), n_users=pop.n_users, strata=list(ANALOG_STRATA))
    diags = biascalc.correlation_diagnostic(f)
    bundle.add("correlation", [
        {"covariate": d.covariate, "outcome_device": j + 1,
         **{f"exposure_d{l + 1}": float(v) for l, v in enumerate(row)}, "flag": d.flag}
        for d in diags for j, row in enumerate(d.matrix)])

    slopes = true.slope_index
    ci_t, ci_f = true.ci95[slopes], frag.ci95[slopes]
    bundle.checks["fragmented_above_true"] = bool(np.all(frag.coefficients[slopes] > true.coefficients[slopes]))
    bundle.checks["fragmented_ci_disjoint"] = bool(np.all(ci_f[:, 0] > ci_t[:, 1]))
    bundle.checks["diagonal_dominant_correlation"] = all(d.flag for d in diags)

    cov_rows = []
    for rep in range(M):
        s = seed if rep == 0 else _rep_seed(seed, rep)
        if rep > 0:
            _, _, true, frag, agg = _analog_fit(s, tol)
        ci = agg.ci95
        for i in slopes:
            cov_rows.append({"rep": rep, "term": true.terms[i], "true_estimate": float(true.coefficients[i]),
                             "aggregated_estimate": float(agg.coefficients[i]), "aggregated_ci_lo": float(ci[i, 0]),
                             "aggregated_ci_hi": float(ci[i, 1]),
                             "covered": bool(ci[i, 0] <= true.coefficients[i] <= ci[i, 1]),
                             "fragmented_estimate": float(frag.coefficients[i])})
    bundle.add("coverage", cov_rows, M=M)
    terms = [true.terms[i] for i in slopes]
    rates = {t: float(np.mean([r["covered"] for r in cov_rows if r["term"] == t])) for t in terms}
    bundle.add("coverage_summary", [{"term": t, "coverage": c} for t, c in rates.items()], M=M)
    bundle.checks["aggregated_coverage_>=0.9"] = all(c >= 0.9 for c in rates.values())
    return bundle


def scenario_mixed(seed: int = 0, mc_reps: int | None = None, tol: Tolerances = DEFAULT) -> ReportBundle:
    pop = generate_population(analog_dgp(seed))
    table = sweep_mixed(pop, draw_assignment(pop), [round(0.1 * i, 1) for i in range(11)], tol=tol)
    bundle = ReportBundle("mixed-sweep")
    bundle.add("sweep", table.rows(), max_identity_residual=float(np.max(table.identity_residual)))
    bundle.add("identity", [{"r": float(r), "identity_residual": float(e)}
                            for r, e in zip(table.r, table.identity_residual)])
    bundle.checks["interior_r_exceeds_r1"] = table.nonmonotone
    bundle.checks["identity_holds"] = bool(np.all(table.identity_residual <= tol.mixed_identity))
    return bundle


def scenario_oracle(seed: int = 0, mc_reps: int | None = None, tol: Tolerances = DEFAULT) -> ReportBundle:
    M = mc_reps or 10_000
    rows = []
    passed = []
    for i, fix in enumerate(random_fixtures(20, seed)):
        rep = run_monte_carlo(fix, M, seed + i, tol=tol)
        rows += _mc_rows(rep)
        passed.append(rep.all_pass)
    bundle = ReportBundle("oracle-suite")
    bundle.add("montecarlo", rows, M=M, z_threshold=tol.mc_z, fixtures=20)
    bundle.checks["all_fixtures_pass"] = all(passed)
    return bundle


BUILTINS: dict[str, Callable[..., ReportBundle]] = {
    "table1": scenario_table1,
    "randomization-lambda-sweep": scenario_randomization,
    "stc-J2": lambda seed=0, mc_reps=None, tol=DEFAULT: scenario_stc(2, seed, mc_reps, tol),
    "stc-J3": lambda seed=0, mc_reps=None, tol=DEFAULT: scenario_stc(3, seed, mc_reps, tol),
    "stc-J5": lambda seed=0, mc_reps=None, tol=DEFAULT: scenario_stc(5, seed, mc_reps, tol),
    "activity-analog": scenario_activity,
    "mixed-sweep": scenario_mixed,
    "oracle-suite": scenario_oracle,
}


def run_builtin(name: str, seed: int = 0, mc_reps: int | None = None, tol: Tolerances = DEFAULT) -> ReportBundle:
    if name not in BUILTINS:
        raise ConfigError(f"unknown scenario {name!r}; built-ins are {sorted(BUILTINS)}", field="scenario")
    return BUILTINS[name](seed=check_seed(seed), mc_reps=mc_reps, tol=tol)


def run_scenario(cfg: ScenarioConfig) -> ReportBundle:
    """Run a scenario; package errors are re-raised with the scenario name prefixed."""
    try:
        if cfg.dgp is None:
            return run_builtin(cfg.name, cfg.seed or 0, cfg.mc_reps, cfg.tol)
        return _run_generic(cfg)
    except FraglabError as exc:
        exc.args = (f"scenario {cfg.name!r}: {exc.args[0] if exc.args else exc}", *exc.args[1:])
        raise
