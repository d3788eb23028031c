"""Remedies for fragmentation bias: STC de-biasing, stratified aggregation,
and the partial-linking (mixed estimator) sweep."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .biascalc import STCReport
from .datagen import Population
from .errors import ConfigError, STCViolation
from .estimators import EstimateReport, estimate_mixed, ols
from .fragmentation import AssignmentMatrix, DesignMatrices, FragmentedDataset, covariate_names, fragment
from .tolerances import DEFAULT, Tolerances

# ---------------------------------------------------------------------------
# STC de-biasing


@dataclass
class DebiasReport:
    raw: EstimateReport
    J_used: float
    debiased_coefficients: np.ndarray
    debiased_se: np.ndarray
    stc: STCReport | None
    forced: bool = False
    approximate: bool = False
    ci_inflation_vs_matched: np.ndarray | None = None

    @property
    def terms(self) -> list[str]:
        return self.raw.terms

    def as_estimate(self) -> EstimateReport:
        r = self.raw
        return EstimateReport(list(r.terms), self.debiased_coefficients, self.debiased_se, r.n_rows, r.n_params,
                              r.condition_number, f"{r.model_form}-debiased")

    def to_dict(self) -> dict:
        return {
            "J_used": self.J_used,
            "forced": self.forced,
            "approximate": self.approximate,
            "terms": list(self.terms),
            "raw": self.raw.to_dict(),
            "debiased_coefficients": self.debiased_coefficients.tolist(),
            "debiased_se": self.debiased_se.tolist(),
            "ci_inflation_vs_matched": None if self.ci_inflation_vs_matched is None
            else self.ci_inflation_vs_matched.tolist(),
            "stc": None if self.stc is None else self.stc.to_dict(),
        }


def debias_stc(raw: EstimateReport, J_used: float, stc: STCReport | None, *, force: bool = False,
               matched: EstimateReport | None = None, approximate: bool = False) -> DebiasReport:
    """Undo the ``1/J`` attenuation of the common-effect fragmented estimator.

    Slopes and their standard errors are multiplied by ``J_used``. Rescaling
    does not recover the intercept, so it is reported as NaN. Pass the
    average number of fragments per user as ``J_used`` (and
    ``approximate=True``) when fragment counts vary across users.

    Raises
    ------
    STCViolation
        The STC report is missing or violated and ``force`` is not set.
    """
    if J_used < 1:
        raise ConfigError("J_used must be at least 1", field="J_used")
    if not force:
        if stc is None:
            raise STCViolation("no STC evidence supplied; pass force=True to override")
        if not stc.satisfied:
            raise STCViolation(f"symmetric treatment condition violated: {', '.join(stc.failed)}")
    slopes = raw.slope_index
    coef = np.full_like(raw.coefficients, np.nan)
    se = np.full_like(raw.standard_errors, np.nan)
    coef[slopes] = J_used * raw.coefficients[slopes]
    se[slopes] = J_used * raw.standard_errors[slopes]
    inflation = None
    if matched is not None:
        inflation = se[raw.slope_index] / matched.standard_errors[matched.slope_index]
    return DebiasReport(raw, float(J_used), coef, se, stc, force, approximate, inflation)


# ---------------------------------------------------------------------------
# stratified aggregation


@dataclass
class AggregatedDataset:
    variables: list[str]
    keys: list[tuple]
    n_fragments: np.ndarray
    y_sum: np.ndarray
    x_sum: np.ndarray  # (bins, k)
    x_sum_by_device: np.ndarray  # (bins, J*k), device-major blocks
    n_devices: int
    n_users_oracle: np.ndarray | None = None
    dropped_bins: int = 0
    dropped_fragments: int = 0

    @property
    def n_bins(self) -> int:
        return len(self.keys)

    @property
    def n_covariates(self) -> int:
        return self.x_sum.shape[1]

    def rows(self) -> list[dict]:
        out = []
        for b, key in enumerate(self.keys):
            row = {v: key[i] for i, v in enumerate(self.variables)}
            row["n_fragments"] = int(self.n_fragments[b])
            row["y_sum"] = float(self.y_sum[b])
            for c in range(self.n_covariates):
                row[f"xsum_{c + 1}"] = float(self.x_sum[b, c])
            out.append(row)
        return out


def aggregate_strata(f: FragmentedDataset, variables: Sequence[str], *, min_bin_rows: int = 1) -> AggregatedDataset:
    """Sum fragment outcomes and exposures within each combination of strata values.

    Bins are sorted by key. Bins with fewer than ``min_bin_rows`` fragments
    are dropped and counted on the result.
    """
    variables = list(variables)
    if not variables:
        raise ConfigError("at least one strata variable is required", field="strata")
    for v in variables:
        if v not in f.strata:
            raise ConfigError(f"unknown strata variable {v!r}; have {sorted(f.strata)}", field="strata")
    cols = [np.asarray(f.strata[v]) for v in variables]
    codes = []
    levels = []
    for c in cols:
        lev, inv = np.unique(c, return_inverse=True)
        levels.append(lev)
        codes.append(inv.reshape(-1))
    combo = np.column_stack(codes)
    uniq, bin_of = np.unique(combo, axis=0, return_inverse=True)
    bin_of = bin_of.reshape(-1)
    B = uniq.shape[0]
    J, k = f.n_devices, f.n_covariates

    count = np.bincount(bin_of, minlength=B)
    y_sum = np.bincount(bin_of, weights=f.y, minlength=B)
    x_sum = np.column_stack([np.bincount(bin_of, weights=f.X[:, c], minlength=B) for c in range(k)])
    by_dev = np.zeros((B, J * k))
    for j in range(J):
        rows = f.device == j
        for c in range(k):
            by_dev[:, j * k + c] = np.bincount(bin_of[rows], weights=f.X[rows, c], minlength=B)
    users = None
    if f.has_oracle:
        pairs = np.unique(np.column_stack([bin_of, f.true_user]), axis=0)
        users = np.bincount(pairs[:, 0], minlength=B)

    keep = count >= min_bin_rows
    if not keep.any():
        raise ConfigError("aggregation produced zero bins", field="min_bin_rows")
    keys = [tuple(_py(levels[i][uniq[b, i]]) for i in range(len(variables))) for b in np.flatnonzero(keep)]
    return AggregatedDataset(
        variables, keys, count[keep], y_sum[keep], x_sum[keep], by_dev[keep], J,
        None if users is None else users[keep],
        dropped_bins=int((~keep).sum()), dropped_fragments=int(count[~keep].sum()),
    )


def _py(v):
    return v.item() if hasattr(v, "item") else v


def aggregated_design(agg: AggregatedDataset, form: str = "common", intercept: str = "count") -> DesignMatrices:
    """Bin-level design.

    ``intercept="count"`` uses the bin's member count (fragments divided by
    fragments per user) as the intercept regressor, since summing the
    individual model over a bin multiplies the intercept by its size.
    ``intercept="plain"`` uses a column of ones instead.
    """
    if intercept == "count":
        icol = agg.n_fragments / agg.n_devices
    elif intercept == "plain":
        icol = np.ones(agg.n_bins)
    else:
        raise ConfigError(f"unknown intercept treatment {intercept!r}", field="intercept")
    k = agg.n_covariates
    if form == "common":
        X = np.column_stack([icol, agg.x_sum])
        terms = ["intercept", *covariate_names(k)]
    elif form == "device-specific":
        X = np.column_stack([icol, agg.x_sum_by_device])
        terms = ["intercept"] + [f"{c}_d{j + 1}" for j in range(agg.n_devices) for c in covariate_names(k)]
    else:
        raise ConfigError(f"unknown form {form!r}", field="form")
    return DesignMatrices(f"aggregated-{form}", agg.y_sum.copy(), X, terms)


def estimate_aggregated(agg: AggregatedDataset, form: str = "common", *, intercept: str = "count",
                        tol: Tolerances = DEFAULT) -> EstimateReport:
    """OLS on bin sums. Fails with too few bins (rank deficiency or no residual df)."""
    return ols(aggregated_design(agg, form, intercept), tol)


# ---------------------------------------------------------------------------
# mixed-estimator sweep


@dataclass
class SweepTable:
    terms: list[str]
    r: np.ndarray
    bias: np.ndarray  # (len(r), p)
    identity_residual: np.ndarray
    flags: dict[str, bool] = field(default_factory=dict)

    @property
    def abs_bias(self) -> np.ndarray:
        return np.abs(self.bias)

    @property
    def nonmonotone(self) -> bool:
        return any(self.flags.get(t, False) for t in self.terms if t != "intercept")

    def rows(self) -> list[dict]:
        out = []
        for i, r in enumerate(self.r):
            for j, t in enumerate(self.terms):
                out.append({"r": float(r), "term": t, "bias": float(self.bias[i, j]),
                            "abs_bias": float(abs(self.bias[i, j])), "flag_nonmonotone": bool(self.flags[t])})
        return out


def sweep_mixed(pop: Population, a: AssignmentMatrix, r_grid: Sequence[float], beta_true=None, *,
                seed: int | None = None, tol: Tolerances = DEFAULT) -> SweepTable:
    """Bias of the mixed estimator across fragmented fractions ``r``.

    A term is flagged non-monotone when some interior ``r`` (strictly
    between 0 and 1) has larger absolute bias than ``r = 1``. ``r = 1`` is
    added to the grid when missing.
    """
    if beta_true is None:
        if pop.config is None or pop.config.model_form != "common":
            raise ConfigError("pass beta_true (intercept first) for populations without common-effect truth",
                              field="beta_true")
        beta_true = np.concatenate([[pop.config.beta0], np.asarray(pop.config.beta1, dtype=float)])
    beta_true = np.asarray(beta_true, dtype=float)
    grid = sorted(set(float(r) for r in r_grid) | {1.0})
    f = fragment(pop, a)
    bias, resid, terms = [], [], None
    for r in grid:
        rep = estimate_mixed(pop, a, r, seed=seed, f=f, tol=tol)
        terms = rep.terms
        bias.append(rep.beta_mixed - beta_true)
        resid.append(rep.identity_residual)
    bias = np.array(bias)
    grid = np.array(grid)
    interior = (grid > 0) & (grid < 1)
    at_one = np.abs(bias[-1])
    flags = {t: bool(np.any(np.abs(bias[interior, j]) > at_one[j])) for j, t in enumerate(terms)}
    return SweepTable(terms, grid, bias, np.array(resid), flags)
