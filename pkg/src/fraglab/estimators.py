"""OLS machinery and the naive / true / mixed estimators built on it.

All fits go through a reduced QR factorisation with an explicit singular
value check; the Gram matrix is never inverted to obtain coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .datagen import Population
from .errors import ConfigError, SingularDesignError
from .fragmentation import (
    AssignmentMatrix,
    DesignMatrices,
    FragmentedDataset,
    fragment,
    stack,
    true_design,
)
from .rng import substream
from .tolerances import DEFAULT, Tolerances

Z95 = 1.96


@dataclass
class EstimateReport:
    terms: list[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    n_rows: int
    n_params: int
    condition_number: float
    model_form: str
    rss: float = float("nan")
    sigma2: float = float("nan")

    @property
    def ci95(self) -> np.ndarray:
        half = Z95 * self.standard_errors
        return np.column_stack([self.coefficients - half, self.coefficients + half])

    def coef(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def se(self, term: str) -> float:
        return float(self.standard_errors[self.terms.index(term)])

    @property
    def slope_index(self) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.terms) if t != "intercept"], dtype=int)

    def renamed(self, mapping: dict[str, str]) -> "EstimateReport":
        out = EstimateReport(**{**self.__dict__})
        out.terms = [mapping.get(t, t) for t in self.terms]
        return out

    def rows(self) -> list[dict]:
        ci = self.ci95
        return [
            {"term": t, "estimate": float(b), "se": float(s), "ci_lo": float(lo), "ci_hi": float(hi)}
            for t, b, s, (lo, hi) in zip(self.terms, self.coefficients, self.standard_errors, ci)
        ]

    def to_dict(self) -> dict:
        return {
            "model_form": self.model_form,
            "terms": list(self.terms),
            "coefficients": self.coefficients.tolist(),
            "standard_errors": self.standard_errors.tolist(),
            "ci95": self.ci95.tolist(),
            "n_rows": self.n_rows,
            "n_params": self.n_params,
            "condition_number": self.condition_number,
            "rss": self.rss,
            "sigma2": self.sigma2,
        }


@dataclass
class QRFactor:
    Q: np.ndarray
    R: np.ndarray
    condition_number: float

    def solve(self, Y: np.ndarray) -> np.ndarray:
        """Least-squares coefficients for one (``(n,)``) or many (``(n, M)``) responses."""
        return linalg.solve_triangular(self.R, self.Q.T @ Y, check_finite=False)

    def unscaled_covariance(self) -> np.ndarray:
        """``(X'X)^{-1}`` assembled from ``R^{-1}``."""
        Rinv = linalg.solve_triangular(self.R, np.eye(self.R.shape[0]), check_finite=False)
        return Rinv @ Rinv.T


def factor(X: np.ndarray, tol: Tolerances = DEFAULT) -> QRFactor:
    """QR-factor ``X`` after checking its column rank to ``tol.rank_rtol``."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < p:
        raise SingularDesignError(f"{n} rows for {p} parameters")
    Q, R = np.linalg.qr(X, mode="reduced")
    sv = np.linalg.svd(R, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if not np.isfinite(cond) or sv[-1] < tol.rank_rtol * sv[0]:
        raise SingularDesignError("design is rank deficient", condition_number=cond)
    return QRFactor(Q, R, cond)


def ols(design: DesignMatrices, tol: Tolerances = DEFAULT) -> EstimateReport:
    """Ordinary least squares with homoskedastic standard errors.

    Raises
    ------
    SingularDesignError
        Smallest singular value below ``tol.rank_rtol`` times the largest.

    With as many rows as parameters the fit is exact: coefficients are
    returned, and ``sigma2`` and the standard errors are NaN.
    """
    X, Y = design.X, design.Y
    n, p = X.shape
    qr = factor(X, tol)
    beta = qr.solve(Y)
    resid = Y - X @ beta
    rss = float(resid @ resid)
    sigma2 = rss / (n - p) if n > p else float("nan")
    se = np.sqrt(sigma2 * np.diag(qr.unscaled_covariance()))
    return EstimateReport(list(design.terms), beta, se, n, p, qr.condition_number, design.model_form, rss, sigma2)


def coefficients(X: np.ndarray, Y: np.ndarray, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Coefficients only (no residual degrees of freedom needed)."""
    return factor(X, tol).solve(Y)


def estimate_true(pop: Population, form: str = "common", tol: Tolerances = DEFAULT) -> EstimateReport:
    """Regress ``y`` on the un-fragmented design."""
    return ols(true_design(pop, form), tol)


def estimate_fragmented(f: FragmentedDataset, form: str = "common-stacked", tol: Tolerances = DEFAULT):
    """Naive fragment-level regression; a list of reports for ``device-split``."""
    designs = stack(f.without_oracle(), form)
    if isinstance(designs, list):
        return [ols(d, tol) for d in designs]
    return ols(designs, tol)


# ---------------------------------------------------------------------------
# mixed matched / fragmented estimator


@dataclass
class MixedEstimateReport:
    r: float
    n_fragmented_users: int
    pooled: EstimateReport
    beta_fragmented_only: np.ndarray
    beta_linked_only: np.ndarray
    omega: np.ndarray
    identity_residual: float
    notes: list[str] = field(default_factory=list)

    @property
    def beta_mixed(self) -> np.ndarray:
        return self.pooled.coefficients

    @property
    def terms(self) -> list[str]:
        return self.pooled.terms

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "n_fragmented_users": self.n_fragmented_users,
            "terms": self.terms,
            "beta_mixed": self.beta_mixed.tolist(),
            "beta_fragmented_only": self.beta_fragmented_only.tolist(),
            "beta_linked_only": self.beta_linked_only.tolist(),
            "omega": self.omega.tolist(),
            "identity_residual": self.identity_residual,
            "notes": list(self.notes),
            "pooled": self.pooled.to_dict(),
        }


def mixed_users(n: int, r: float, seed: int) -> np.ndarray:
    """Indices of the ``round(r n)`` users whose identities stay fragmented."""
    m = int(np.floor(r * n + 0.5))
    return np.sort(substream(seed, "mixed").permutation(n)[:m])


def estimate_mixed(pop: Population, a: AssignmentMatrix, r: float, *, seed: int | None = None,
                   f: FragmentedDataset | None = None, tol: Tolerances = DEFAULT) -> MixedEstimateReport:
    """Pooled OLS over fragmented rows of a random user subset plus matched rows of the rest.

    The pooled coefficients decompose as ``omega b_f + (I - omega) b_l`` with
    ``omega = (A + B)^{-1} A``, where ``A`` and ``B`` are the Gram matrices of
    the fragmented and the matched sub-designs. The residual of that identity
    is stored on the report.
    """
    if not 0.0 <= r <= 1.0:
        raise ConfigError("fraction must lie in [0, 1]", field="r")
    if seed is None:
        seed = pop.seed if pop.seed is not None else 0
    n, k = pop.n_users, pop.n_covariates
    p = 1 + k
    notes = []
    frag_users = mixed_users(n, r, seed)
    m = frag_users.size
    if r > 0 and m == 0:
        notes.append(f"r*n = {r * n:.3g} rounds to 0 fragmented users")

    if f is None:
        f = fragment(pop, a)
    is_frag = np.zeros(n, dtype=bool)
    is_frag[frag_users] = True
    rows = is_frag[f.true_user]
    Xf = np.column_stack([np.ones(int(rows.sum())), f.X[rows]])
    Yf = f.y[rows]
    linked = ~is_frag
    Xl = np.column_stack([np.ones(int(linked.sum())), pop.total_exposure[linked]])
    Yl = pop.y[linked]

    design = DesignMatrices("mixed", np.concatenate([Yf, Yl]), np.vstack([Xf, Xl]),
                            ["intercept", *(f"x{c + 1}" for c in range(k))])
    pooled = ols(design, tol)

    A = Xf.T @ Xf
    B = Xl.T @ Xl
    omega = np.linalg.solve(A + B, A)
    nan = np.full(p, np.nan)
    b_f = _try_coefficients(Xf, Yf, tol) if m > 0 else nan
    b_l = _try_coefficients(Xl, Yl, tol) if m < n else nan

    parts = []
    if m > 0:
        parts.append(omega @ b_f)
    if m < n:
        parts.append((np.eye(p) - omega) @ b_l)
    recon = np.sum(parts, axis=0)
    scale = max(1.0, float(np.max(np.abs(pooled.coefficients))))
    resid = float(np.max(np.abs(pooled.coefficients - recon))) / scale
    if not np.isfinite(resid):
        notes.append("a pure sub-estimator is undefined (singular sub-design); identity not evaluated")
    return MixedEstimateReport(r, m, pooled, b_f, b_l, omega, resid, notes)


def _try_coefficients(X, Y, tol):
    try:
        return coefficients(X, Y, tol)
    except SingularDesignError:
        return np.full(X.shape[1], np.nan)
