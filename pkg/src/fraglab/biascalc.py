"""Closed-form conditional bias of fragmented-data OLS, given the exposures.

Notation used throughout: ``X`` holds device exposure blocks with shape
``(J, n, k)``; ``lam`` holds each user's purchase-device probabilities,
either as a length-``n`` vector (J = 2, probability of device 1) or as an
``(n, J)`` matrix whose rows lie on the simplex. The conditional bias of the
slope block is always ``vartheta @ (delta1 + delta2 + delta3)`` where
``vartheta`` is the slope block of the inverse stacked Gram matrix and

* ``delta1``: attenuation from splitting the outcome across fragments,
* ``delta2``: exposure seen on the other fragments (omitted-variable term),
* ``delta3``: covariance between exposures and the purchase device.

The J = 2 functions spell the expressions out term by term; the ``*_J``
functions use the general sums. The two are kept separate on purpose so that
one can check the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigError, SingularDesignError
from .estimators import ols
from .fragmentation import DesignMatrices, FragmentedDataset
from .tolerances import DEFAULT, Tolerances

# eigenvalue ratio below which a Gram / Schur complement counts as singular
GRAM_RTOL = 1e-12


@dataclass
class BiasDecomposition:
    vartheta: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    delta3: np.ndarray
    total: np.ndarray
    model_form: str
    lambda_source: str = "oracle"
    terms: list[str] = field(default_factory=list)

    @property
    def delta(self) -> np.ndarray:
        return self.delta1 + self.delta2 + self.delta3

    def to_dict(self) -> dict:
        return {
            "model_form": self.model_form,
            "lambda_source": self.lambda_source,
            "terms": list(self.terms),
            "vartheta": np.atleast_2d(self.vartheta).tolist(),
            "delta1": self.delta1.tolist(),
            "delta2": self.delta2.tolist(),
            "delta3": self.delta3.tolist(),
            "total": self.total.tolist(),
        }

    def rows(self) -> list[dict]:
        return [
            {"term": t, "delta1": float(a), "delta2": float(b), "delta3": float(c), "total": float(d)}
            for t, a, b, c, d in zip(self.terms, self.delta1, self.delta2, self.delta3, self.total)
        ]


# ---------------------------------------------------------------------------
# input normalisation


def as_blocks(X) -> np.ndarray:
    """Coerce a list of ``(n,)``/``(n, k)`` arrays or a ``(J, n, k)`` array."""
    if isinstance(X, (list, tuple)):
        X = np.stack([np.asarray(x, dtype=float).reshape(len(x), -1) for x in X])
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim != 3:
        raise ConfigError(f"exposures must be (J, n, k), got shape {X.shape}", field="X")
    return X


def lambda_matrix(lam, J: int, n: int) -> np.ndarray:
    """Return purchase-device probabilities as a ``(J, n)`` array (row j = diag of Lambda_j)."""
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 0:
        if J != 2:
            raise ConfigError("a scalar lambda is only meaningful for J = 2", field="lambda")
        lam = np.full(n, float(lam))
    if lam.ndim == 1:
        if J != 2 or lam.shape[0] != n:
            raise ConfigError(f"expected a length-{n} vector for J = 2", field="lambda")
        L = np.vstack([lam, 1.0 - lam])
    elif lam.shape == (n, J):
        L = lam.T.copy()
    else:
        raise ConfigError(f"lambda of shape {lam.shape} does not match n={n}, J={J}", field="lambda")
    if np.any(L < -1e-12) or np.any(L > 1 + 1e-12):
        raise ConfigError("probabilities must lie in [0, 1]", field="lambda")
    if np.max(np.abs(L.sum(axis=0) - 1.0)) > 1e-10:
        raise ConfigError("device probabilities must sum to 1 for every user", field="lambda")
    return L


def _vec(beta, k: int, name: str) -> np.ndarray:
    b = np.atleast_1d(np.asarray(beta, dtype=float)).reshape(-1)
    if b.size != k:
        raise ConfigError(f"expected {k} coefficients, got {b.size}", field=name)
    return b


def _spd_inverse(G: np.ndarray, what: str) -> np.ndarray:
    G = np.atleast_2d(G)
    G = (G + G.T) / 2.0
    w = np.linalg.eigvalsh(G)
    cond = float(w[-1] / w[0]) if w[0] > 0 else float("inf")
    if w[-1] <= 0 or w[0] <= GRAM_RTOL * w[-1]:
        raise SingularDesignError(f"{what} is singular (no exposure variation?)", condition_number=cond)
    c = linalg.cho_factor(G)
    return linalg.cho_solve(c, np.eye(G.shape[0]))


def _slope_terms(k: int, J: int | None = None) -> list[str]:
    base = [f"x{c + 1}" for c in range(k)]
    if J is None:
        return base
    return [f"{b}_d{j + 1}" for j in range(J) for b in base]


# ---------------------------------------------------------------------------
# vartheta via Schur complements


def vartheta_common(X) -> np.ndarray:
    """Slope block of ``(X~'X~)^{-1}`` for the common-effect stack ``[1, X_j]``.

    Uses the Schur complement of the intercept entry ``J n``::

        [sum_j X_j'X_j - (sum_j X_j'1)(1' sum_j X_j) / (J n)]^{-1}
    """
    X = as_blocks(X)
    J, n, k = X.shape
    S = np.einsum("jnk,jnl->kl", X, X)
    t = X.sum(axis=(0, 1))
    return _spd_inverse(S - np.outer(t, t) / (J * n), "Schur complement")


def vartheta_device_specific(X) -> np.ndarray:
    """Slope block of ``(X~'X~)^{-1}`` for the block-diagonal device-specific stack."""
    X = as_blocks(X)
    J, n, k = X.shape
    A22 = linalg.block_diag(*(X[j].T @ X[j] for j in range(J)))
    t = X.sum(axis=1).reshape(J * k)
    return _spd_inverse(A22 - np.outer(t, t) / (J * n), "Schur complement")


def vartheta_dense(design: np.ndarray) -> np.ndarray:
    """Reference: invert the full Gram matrix and take the slope block."""
    G = design.T @ design
    return np.linalg.inv(G)[1:, 1:]


# ---------------------------------------------------------------------------
# common-effect model


def bias_common(X1, X2, lam, beta0: float, beta1) -> BiasDecomposition:
    """Conditional bias of the pooled common-slope estimator, J = 2.

    ``lam`` is the per-user probability that the purchase lands on device 1.
    The exposure-fragmentation term is written ``X1' L X2 + X2' (I - L) X1``,
    which equals ``X1' X2`` for a scalar exposure and stays exact for k > 1.
    """
    X = as_blocks([X1, X2])
    _, n, k = X.shape
    X1, X2 = X
    L = lambda_matrix(lam, 2, n)[0]
    b1 = _vec(beta1, k, "beta1")

    d3 = (X1 - X2).T @ (L - 0.5) * beta0
    d2 = (X1.T @ (L[:, None] * X2) + X2.T @ ((1.0 - L)[:, None] * X1)) @ b1
    d1 = -(X1.T @ ((1.0 - L)[:, None] * X1) + X2.T @ (L[:, None] * X2)) @ b1
    theta = vartheta_common(X)
    return BiasDecomposition(theta, d1, d2, d3, theta @ (d1 + d2 + d3), "common-stacked",
                             terms=_slope_terms(k))


def bias_common_J(X, lam, beta0: float, beta1) -> BiasDecomposition:
    """Common-effect conditional bias for any number of fragments ``J >= 2``.

    ``delta3 = sum_j X_j'(L_j - I/J) 1 beta0``,
    ``delta1 = sum_j X_j'(L_j - I) X_j beta1``,
    ``delta2 = sum_{j != l} X_j' L_j X_l beta1`` (ordered pairs).
    """
    X = as_blocks(X)
    J, n, k = X.shape
    L = lambda_matrix(lam, J, n)
    b1 = _vec(beta1, k, "beta1")

    d3 = np.einsum("jnk,jn->k", X, L - 1.0 / J) * beta0
    d1 = np.zeros(k)
    d2 = np.zeros(k)
    for j in range(J):
        d1 += X[j].T @ ((L[j] - 1.0)[:, None] * X[j]) @ b1
        for l in range(J):
            if l != j:
                d2 += X[j].T @ (L[j][:, None] * X[l]) @ b1
    theta = vartheta_common(X)
    return BiasDecomposition(theta, d1, d2, d3, theta @ (d1 + d2 + d3), "common-stacked",
                             terms=_slope_terms(k))


@dataclass(frozen=True)
class ScalarMoments:
    """Empirical means for the scalar-exposure bias formula.

    ``lam_*`` are lambda-weighted means, e.g. ``lam_x1sq = mean(lam * x1**2)``.
    """

    x1: float
    x2: float
    x1sq: float
    x2sq: float
    x1x2: float
    lam_x1: float
    lam_x2: float
    lam_x1sq: float
    lam_x2sq: float

    @classmethod
    def with_constant_lambda(cls, lam: float, *, x1, x2, x1sq, x2sq, x1x2) -> "ScalarMoments":
        return cls(x1, x2, x1sq, x2sq, x1x2, lam * x1, lam * x2, lam * x1sq, lam * x2sq)


def scalar_moments(x1, x2, lam) -> ScalarMoments:
    x1 = np.asarray(x1, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), x1.shape)
    return ScalarMoments(
        x1.mean(), x2.mean(), (x1**2).mean(), (x2**2).mean(), (x1 * x2).mean(),
        (lam * x1).mean(), (lam * x2).mean(), (lam * x1**2).mean(), (lam * x2**2).mean(),
    )


def bias_common_scalar(moments: ScalarMoments, beta0: float, beta1: float, lam: float | None = None) -> float:
    """Scalar-exposure bias from empirical means (J = 2, k = 1).

    If ``lam`` is given the lambda-weighted means are replaced by ``lam``
    times the plain means (constant preference).
    """
    m = moments
    if lam is not None:
        m = ScalarMoments.with_constant_lambda(lam, x1=m.x1, x2=m.x2, x1sq=m.x1sq, x2sq=m.x2sq, x1x2=m.x1x2)
    denom = m.x1sq + m.x2sq - 0.5 * (m.x1 + m.x2) ** 2
    scale = max(abs(m.x1sq), abs(m.x2sq), 1e-300)
    if abs(denom) <= GRAM_RTOL * scale:
        raise SingularDesignError("no exposure variance", condition_number=float("inf"))
    spurious = (m.lam_x1 - m.lam_x2) - 0.5 * (m.x1 - m.x2)
    slope = -(m.x1sq - m.lam_x1sq) + m.x1x2 - m.lam_x2sq
    return float((spurious * beta0 + slope * beta1) / denom)


# ---------------------------------------------------------------------------
# device-specific model


def bias_device_specific_stacked(X1, X2, lam, beta0: float, beta1, beta2) -> BiasDecomposition:
    """Stacked device-specific slopes, J = 2.

    Block 1: ``X1'(L - I/2)1 b0 - X1'(I - L)X1 b1 + X1' L X2 b2``;
    block 2: ``X2'(I/2 - L)1 b0 + X2'(I - L)X1 b1 - X2' L X2 b2``.
    """
    X = as_blocks([X1, X2])
    _, n, k = X.shape
    X1, X2 = X
    L = lambda_matrix(lam, 2, n)[0]
    b1, b2 = _vec(beta1, k, "beta1"), _vec(beta2, k, "beta2")
    M = 1.0 - L

    d3 = np.concatenate([X1.T @ (L - 0.5) * beta0, X2.T @ (0.5 - L) * beta0])
    d1 = np.concatenate([-(X1.T @ (M[:, None] * X1)) @ b1, -(X2.T @ (L[:, None] * X2)) @ b2])
    d2 = np.concatenate([(X1.T @ (L[:, None] * X2)) @ b2, (X2.T @ (M[:, None] * X1)) @ b1])
    theta = vartheta_device_specific(X)
    return BiasDecomposition(theta, d1, d2, d3, theta @ (d1 + d2 + d3), "device-specific-stacked",
                             terms=_slope_terms(k, 2))


def _centered(X: np.ndarray, intercept: bool) -> np.ndarray:
    return X - X.mean(axis=0) if intercept else X


def bias_device_specific_split(X1, X2, lam, beta1, beta2, beta0: float = 0.0,
                               intercept: bool = True) -> list[BiasDecomposition]:
    """Per-device regressions ``y_j ~ [1, X_j]``, J = 2.

    With ``intercept=True`` the multipliers use within-device centred
    exposures ``C_j = X_j - mean(X_j)``::

        device 1: (C1'X1)^{-1} [-C1'(I - L)X1 b1 + C1' L X2 b2 + C1' L 1 b0]
        device 2: (C2'X2)^{-1} [-C2' L X2 b2 + C2'(I - L)X1 b1 + C2'(I - L)1 b0]

    The ``b0`` term vanishes when ``L`` does not vary across users. With
    ``intercept=False`` the exposures are not centred (regression through
    the origin).
    """
    X = as_blocks([X1, X2])
    _, n, k = X.shape
    X1, X2 = X
    L = lambda_matrix(lam, 2, n)[0]
    b1, b2 = _vec(beta1, k, "beta1"), _vec(beta2, k, "beta2")
    M = 1.0 - L
    C1, C2 = _centered(X1, intercept), _centered(X2, intercept)

    out = []
    t1 = _spd_inverse(C1.T @ X1, "device-1 Gram")
    d1 = -(C1.T @ (M[:, None] * X1)) @ b1
    d2 = (C1.T @ (L[:, None] * X2)) @ b2
    d3 = C1.T @ L * beta0
    out.append(BiasDecomposition(t1, d1, d2, d3, t1 @ (d1 + d2 + d3), "device-split", terms=_slope_terms(k, 2)[:k]))
    t2 = _spd_inverse(C2.T @ X2, "device-2 Gram")
    d1 = -(C2.T @ (L[:, None] * X2)) @ b2
    d2 = (C2.T @ (M[:, None] * X1)) @ b1
    d3 = C2.T @ M * beta0
    out.append(BiasDecomposition(t2, d1, d2, d3, t2 @ (d1 + d2 + d3), "device-split", terms=_slope_terms(k, 2)[k:]))
    return out


def bias_device_specific_J(X, lam, beta0: float, betas, form: str = "stacked",
                           intercept: bool = True):
    """Device-specific bias for ``J >= 2``; ``betas`` has shape ``(J, k)``.

    ``form="stacked"`` returns one decomposition over all ``J k`` slopes;
    ``form="split"`` returns a list with one decomposition per device.
    """
    X = as_blocks(X)
    J, n, k = X.shape
    L = lambda_matrix(lam, J, n)
    B = np.asarray(betas, dtype=float).reshape(J, k)

    def pieces(j, A):
        # A is X_j (stacked) or its centred version (split)
        d1 = A.T @ ((L[j] - 1.0)[:, None] * X[j]) @ B[j]
        d2 = np.zeros(k)
        for l in range(J):
            if l != j:
                d2 += A.T @ (L[j][:, None] * X[l]) @ B[l]
        return d1, d2

    if form == "stacked":
        d1s, d2s, d3s = [], [], []
        for j in range(J):
            d1, d2 = pieces(j, X[j])
            d1s.append(d1)
            d2s.append(d2)
            d3s.append(X[j].T @ (L[j] - 1.0 / J) * beta0)
        d1, d2, d3 = map(np.concatenate, (d1s, d2s, d3s))
        theta = vartheta_device_specific(X)
        return BiasDecomposition(theta, d1, d2, d3, theta @ (d1 + d2 + d3), "device-specific-stacked",
                                 terms=_slope_terms(k, J))
    if form == "split":
        out = []
        terms = _slope_terms(k, J)
        for j in range(J):
            C = _centered(X[j], intercept)
            d1, d2 = pieces(j, C)
            d3 = C.T @ L[j] * beta0
            theta = _spd_inverse(C.T @ X[j], f"device-{j + 1} Gram")
            out.append(BiasDecomposition(theta, d1, d2, d3, theta @ (d1 + d2 + d3), "device-split",
                                         terms=terms[j * k:(j + 1) * k]))
        return out
    raise ConfigError(f"unknown form {form!r}; expected 'stacked' or 'split'", field="form")


def plugin_lambda(f: FragmentedDataset) -> np.ndarray:
    """Constant preference estimated as each device's share of total outcome."""
    tot = f.y.sum()
    if tot == 0:
        raise ConfigError("all fragment outcomes are zero; cannot estimate device shares", field="y")
    return np.array([f.y[f.device == j].sum() / tot for j in range(f.n_devices)])


# ---------------------------------------------------------------------------
# symmetric treatment condition


@dataclass
class STCReport:
    mean_gap: float
    mean_gap_rel: float
    mean_gap_z: float
    second_moment_gap: float
    second_moment_gap_rel: float
    second_moment_gap_z: float
    cross_corr: float
    cross_corr_z: float
    lambda_exposure_dependence: float | None
    flags: dict[str, bool | None]
    thresholds: dict[str, float]

    @property
    def satisfied(self) -> bool:
        return all(v is True for v in self.flags.values())

    @property
    def verdict(self) -> str:
        return "satisfied" if self.satisfied else "violated"

    @property
    def failed(self) -> list[str]:
        return [k for k, v in self.flags.items() if v is not True]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "mean_gap": self.mean_gap,
            "mean_gap_rel": self.mean_gap_rel,
            "mean_gap_z": self.mean_gap_z,
            "second_moment_gap": self.second_moment_gap,
            "second_moment_gap_rel": self.second_moment_gap_rel,
            "second_moment_gap_z": self.second_moment_gap_z,
            "cross_corr": self.cross_corr,
            "cross_corr_z": self.cross_corr_z,
            "lambda_exposure_dependence": self.lambda_exposure_dependence,
            "flags": dict(self.flags),
            "thresholds": dict(self.thresholds),
        }


def _max_pair_gap(V: np.ndarray) -> tuple[float, float, float]:
    """Largest gap between device means of ``V`` ``(J, n, k)``, returned as ``(absolute, relative, paired z)``."""
    J, n, _ = V.shape
    m = V.mean(axis=1)
    gap, rel, z = 0.0, 0.0, 0.0
    for j in range(J):
        for l in range(j + 1, J):
            d = np.abs(m[j] - m[l])
            denom = np.maximum(np.maximum(np.abs(m[j]), np.abs(m[l])), 1e-300)
            sd = (V[j] - V[l]).std(axis=0, ddof=1) if n > 1 else np.zeros_like(d)
            with np.errstate(divide="ignore", invalid="ignore"):
                zz = np.where(sd > 0, d * np.sqrt(n) / sd, np.where(d > 0, np.inf, 0.0))
            gap = max(gap, float(d.max()))
            rel = max(rel, float((d / denom).max()))
            z = max(z, float(zz.max()))
    return gap, rel, z


def _max_cross_corr(X: np.ndarray) -> float:
    J, n, k = X.shape
    flat = X.transpose(1, 0, 2).reshape(n, J * k)
    sd = flat.std(axis=0)
    ok = sd > 0
    if ok.sum() < 2:
        return 0.0
    C = np.full((J * k, J * k), np.nan)
    C[np.ix_(ok, ok)] = np.corrcoef(flat[:, ok], rowvar=False)
    dev = np.repeat(np.arange(J), k)
    cross = dev[:, None] != dev[None, :]
    vals = np.abs(C[cross])
    vals = vals[np.isfinite(vals)]
    return float(vals.max()) if vals.size else 0.0


def _exposure_dependence(X: np.ndarray, device: np.ndarray, tol: Tolerances) -> float:
    """Largest |t| from regressing each assignment indicator on all exposures."""
    J, n, k = X.shape
    design = np.column_stack([np.ones(n), X.transpose(1, 0, 2).reshape(n, J * k)])
    worst = 0.0
    for j in range(J - 1):
        ind = (device == j).astype(float)
        if ind.min() == ind.max():
            continue
        rep = ols(DesignMatrices("stc-dependence", ind, design, ["c"] * design.shape[1]), tol)
        t = rep.coefficients[1:] / rep.standard_errors[1:]
        worst = max(worst, float(np.nanmax(np.abs(t))))
    return worst


def stc_statistics(X, device: np.ndarray | None = None, tol: Tolerances = DEFAULT) -> STCReport:
    """Gap statistics for the symmetric treatment condition.

    Condition A: equal first and second exposure moments across devices and
    no cross-device correlation. Each passes when its gap is below the
    practical threshold (``stc_rel_gap``, ``stc_corr``) or not significant
    at ``stc_sigma`` (paired z for moments, Fisher z for correlations).
    Condition B: the purchase device does not depend on exposures; tested by
    regressing the realised assignment indicators on all exposures. With
    ``device=None`` condition B is left unevaluated, which makes the verdict
    "violated".
    """
    X = as_blocks(X)
    n = X.shape[1]
    gap, gap_rel, gap_z = _max_pair_gap(X)
    sq, sq_rel, sq_z = _max_pair_gap(X**2)
    corr = _max_cross_corr(X)
    corr_z = float(np.arctanh(min(corr, 1 - 1e-16)) * np.sqrt(max(n - 3, 1)))
    dep = None if device is None else _exposure_dependence(X, np.asarray(device), tol)
    s = tol.stc_sigma
    flags = {
        "mean": gap_rel < tol.stc_rel_gap or gap_z < s,
        "second_moment": sq_rel < tol.stc_rel_gap or sq_z < s,
        "independence": corr < tol.stc_corr or corr_z < s,
        "exposure_independent_preference": None if dep is None else dep < s,
    }
    thresholds = {"rel_gap": tol.stc_rel_gap, "corr": tol.stc_corr, "sigma": s}
    return STCReport(gap, gap_rel, gap_z, sq, sq_rel, sq_z, corr, corr_z, dep, flags, thresholds)


def check_stc(source, tol: Tolerances = DEFAULT) -> STCReport:
    """STC report from a :class:`Population` (assignment drawn from its
    preference model) or an oracle-linked :class:`FragmentedDataset`
    (assignment read off the fragment carrying a nonzero outcome)."""
    from .datagen import Population
    from .fragmentation import draw_assignment

    if isinstance(source, Population):
        device = None
        if source.preference.probs is not None:
            device = draw_assignment(source).device
        return stc_statistics(source.X, device, tol)
    if isinstance(source, FragmentedDataset):
        if not source.has_oracle:
            raise ConfigError("STC check on fragments needs the true_user oracle column", field="true_user")
        Y, X = source.canonical().device_blocks()
        bought = Y != 0
        keep = bought.sum(axis=0) == 1
        device = np.argmax(bought, axis=0)
        return stc_statistics(X[:, keep, :], device[keep], tol)
    raise TypeError(f"cannot check STC on {type(source).__name__}")


# ---------------------------------------------------------------------------
# correlation diagnostic


@dataclass
class CorrelationDiagnostic:
    covariate: str
    matrix: np.ndarray  # rows: device outcomes Y_j, columns: device exposures X_j'
    proportionality: float
    column_sums: np.ndarray
    diagonal_exceeds_column_sum: np.ndarray

    @property
    def flag(self) -> bool:
        """Diagonal beats the column sum in most columns."""
        v = self.diagonal_exceeds_column_sum
        return bool(v.sum() * 2 > v.size)

    def to_dict(self) -> dict:
        return {
            "covariate": self.covariate,
            "matrix": self.matrix.tolist(),
            "proportionality": self.proportionality,
            "column_sums": self.column_sums.tolist(),
            "diagonal_exceeds_column_sum": self.diagonal_exceeds_column_sum.tolist(),
            "flag": self.flag,
        }


def _normalised(v: np.ndarray) -> np.ndarray | None:
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return None
    s = np.sign(v.sum()) or 1.0
    return s * v / nrm


def proportionality_statistic(C: np.ndarray) -> float:
    """Largest deviation of unit-normalised columns (and rows) from their mean direction.

    Zero when every column is a multiple of every other column and likewise
    for rows. Columns/rows with undefined entries are skipped.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    worst = 0.0
    for M in (C, C.T):
        vecs = [_normalised(M[:, j]) for j in range(M.shape[1]) if np.all(np.isfinite(M[:, j]))]
        vecs = [v for v in vecs if v is not None]
        if len(vecs) < 2:
            continue
        V = np.column_stack(vecs)
        worst = max(worst, float(np.max(np.abs(V - V.mean(axis=1, keepdims=True)))))
    return worst


def diagnose_matrix(C, covariate: str = "x1") -> CorrelationDiagnostic:
    C = np.atleast_2d(np.asarray(C, dtype=float))
    colsum = np.nansum(C, axis=0)
    diag = np.diag(C)
    return CorrelationDiagnostic(covariate, C, proportionality_statistic(C), colsum, diag > colsum)


def correlation_diagnostic(f: FragmentedDataset) -> list[CorrelationDiagnostic]:
    """Per-covariate ``J x J`` matrix of ``corr(Y_j, X_j')`` across users."""
    if not f.has_oracle:
        raise ConfigError("the correlation diagnostic needs the true_user oracle column", field="true_user")
    Y, X = f.canonical().device_blocks()
    J, n, k = X.shape
    out = []
    for c in range(k):
        C = np.full((J, J), np.nan)
        for j in range(J):
            for l in range(J):
                a, b = Y[j], X[l, :, c]
                if a.std() > 0 and b.std() > 0:
                    C[j, l] = np.corrcoef(a, b)[0, 1]
        out.append(diagnose_matrix(C, f"x{c + 1}"))
    return out
