"""Monte Carlo oracle for the closed-form conditional bias.

Exposures (and the preference probabilities) are held fixed; each
replication redraws the purchase device and the outcome noise from its own
random substream, refits the naive estimator and records the slopes. The
average over replications estimates ``E[beta_hat | X]``, which is compared to
the analytic prediction ``beta + vartheta (delta1 + delta2 + delta3)``.

The estimation path here is the QR least-squares code in
:mod:`fraglab.estimators`; it shares nothing with :mod:`fraglab.biascalc`.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import biascalc
from .datagen import Population, from_exposures, outcome
from .errors import ConfigError
from .estimators import factor
from .fragmentation import AssignmentMatrix, categorical, fragment, stack
from .rng import substream
from .tolerances import DEFAULT, Tolerances

log = logging.getLogger(__name__)

FORMS = ("common-stacked", "device-specific-stacked", "device-split")


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("FRAGLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class MCFixture:
    """Fixed exposures ``X`` ``(J, n, k)``, preference ``lam`` ``(n, J)`` and truth."""

    X: np.ndarray
    lam: np.ndarray
    beta0: float
    slopes: np.ndarray  # (J, k); identical rows for common-effect truth
    form: str = "common-stacked"
    noise_sigma: float = 1.0
    name: str = "fixture"

    def __post_init__(self):
        self.X = biascalc.as_blocks(self.X)
        J, n, k = self.X.shape
        self.lam = biascalc.lambda_matrix(self.lam, J, n).T
        self.slopes = np.asarray(self.slopes, dtype=float).reshape(J, k)
        if self.form not in FORMS:
            raise ConfigError(f"unknown form {self.form!r}", field="form")
        if self.form == "common-stacked" and not np.allclose(self.slopes, self.slopes[0]):
            raise ConfigError("common-stacked fixtures need common-effect truth", field="slopes")

    @property
    def common_truth(self) -> bool:
        return bool(np.all(self.slopes == self.slopes[0]))

    @classmethod
    def from_population(cls, pop: Population, form: str, name: str = "fixture") -> "MCFixture":
        if pop.config is None or pop.preference.probs is None:
            raise ConfigError("Monte Carlo needs a generated population with known truth", field="population")
        cfg = pop.config
        return cls(pop.X, pop.preference.probs, float(cfg.beta0), cfg.slopes(), form, cfg.noise_sigma, name)

    def analytic(self):
        """Closed-form decomposition(s) for this fixture's form."""
        J = self.X.shape[0]
        if self.form == "common-stacked":
            if J == 2:
                return biascalc.bias_common(self.X[0], self.X[1], self.lam[:, 0], self.beta0, self.slopes[0])
            return biascalc.bias_common_J(self.X, self.lam, self.beta0, self.slopes[0])
        if self.form == "device-specific-stacked":
            if J == 2:
                return biascalc.bias_device_specific_stacked(self.X[0], self.X[1], self.lam[:, 0], self.beta0,
                                                             self.slopes[0], self.slopes[1])
            return biascalc.bias_device_specific_J(self.X, self.lam, self.beta0, self.slopes, "stacked")
        if J == 2:
            return biascalc.bias_device_specific_split(self.X[0], self.X[1], self.lam[:, 0], self.slopes[0],
                                                       self.slopes[1], beta0=self.beta0)
        return biascalc.bias_device_specific_J(self.X, self.lam, self.beta0, self.slopes, "split")

    def expected_slopes(self) -> tuple[list[str], np.ndarray]:
        dec = self.analytic()
        J, _, k = self.X.shape
        if isinstance(dec, list):
            terms = [t for d in dec for t in d.terms]
            return terms, self.slopes.reshape(-1) + np.concatenate([d.total for d in dec])
        if self.form == "common-stacked":
            return dec.terms, self.slopes[0] + dec.total
        return dec.terms, self.slopes.reshape(-1) + dec.total


@dataclass
class MCReport:
    name: str
    form: str
    terms: list[str]
    analytic_expected: np.ndarray
    mc_mean: np.ndarray
    mc_std: np.ndarray
    M: int
    z_threshold: float
    runtime: float = field(default=0.0, compare=False)

    @property
    def mc_se(self) -> np.ndarray:
        return self.mc_std / np.sqrt(self.M)

    @property
    def z_score(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (self.mc_mean - self.analytic_expected) / self.mc_se
        # zero MC spread: exact agreement or an outright miss
        exact = self.mc_se == 0
        z[exact] = np.where(np.isclose(self.mc_mean[exact], self.analytic_expected[exact], rtol=1e-9, atol=1e-12),
                            0.0, np.inf)
        return z

    @property
    def passed(self) -> np.ndarray:
        return np.abs(self.z_score) <= self.z_threshold

    @property
    def all_pass(self) -> bool:
        return bool(np.all(self.passed))

    def rows(self) -> list[dict]:
        return [
            {"fixture": self.name, "form": self.form, "term": t, "analytic_expected": float(a), "mc_mean": float(m),
             "mc_se": float(s), "z_score": float(z), "pass": bool(p)}
            for t, a, m, s, z, p in zip(self.terms, self.analytic_expected, self.mc_mean, self.mc_se,
                                        self.z_score, self.passed)
        ]

    def to_dict(self) -> dict:
        # runtime is deliberately left out so report files stay byte-identical
        return {"name": self.name, "form": self.form, "M": self.M, "z_threshold": self.z_threshold,
                "all_pass": self.all_pass, "terms": self.rows()}


def _draw_outcomes(fix: MCFixture, reps: range, seed: int) -> np.ndarray:
    """Fragment outcomes for the given replications, shape ``(J n, len(reps))``."""
    J, n, _ = fix.X.shape
    common = fix.common_truth
    mean_y = outcome(fix.X, fix.beta0, fix.slopes, np.zeros(n), common)
    out = np.empty((J * n, len(reps)))
    for col, i in enumerate(reps):
        rng = substream(seed, "mc-rep", i)
        dev = categorical(fix.lam, rng)
        y = mean_y + (rng.normal(0.0, fix.noise_sigma, n) if fix.noise_sigma > 0 else 0.0)
        Y = np.zeros((J, n))
        Y[dev, np.arange(n)] = y
        out[:, col] = Y.reshape(J * n)
    return out


def run_monte_carlo(fix: MCFixture, M: int, seed: int = 0, *, chunk: int = 500,
                    tol: Tolerances = DEFAULT) -> MCReport:
    """Compare the mean of ``M`` refits at fixed exposures to the analytic prediction."""
    if M < 2:
        raise ConfigError("need at least 2 replications for an MC standard error", field="mc_reps")
    t0 = time.perf_counter()
    terms, expected = fix.expected_slopes()

    J, n, k = fix.X.shape
    template = fragment(from_exposures(fix.X), AssignmentMatrix.constant(n, 0, J)).without_oracle()
    designs = stack(template, fix.form)
    if not isinstance(designs, list):
        designs = [designs]
    factors = [factor(d.X, tol) for d in designs]
    rows_of = [np.flatnonzero(template.device == d.device) if d.device is not None else slice(None)
               for d in designs]

    def work(start: int) -> np.ndarray:
        reps = range(start, min(M, start + chunk))
        Ymat = _draw_outcomes(fix, reps, seed)
        parts = [qr.solve(Ymat[rows])[1:] for qr, rows in zip(factors, rows_of)]
        return np.vstack(parts).T

    starts = list(range(0, M, chunk))
    threads = n_threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            blocks = list(pool.map(work, starts))
    else:
        blocks = [work(s) for s in starts]
    slopes = np.vstack(blocks)
    runtime = time.perf_counter() - t0
    log.info("monte carlo %s (%s): M=%d in %.2fs", fix.name, fix.form, M, runtime)
    return MCReport(fix.name, fix.form, terms, expected, slopes.mean(axis=0), slopes.std(axis=0, ddof=1), M,
                    tol.mc_z, runtime)


def random_fixtures(count: int = 20, seed: int = 0) -> list[MCFixture]:
    """A spread of fixtures over model forms, ``J`` in {2, 3}, ``k`` in {1, 2}
    and preference kinds (constant, logistic, heterogeneous with activity coupling)."""
    combos = [(form, J) for form in FORMS for J in (2, 3)]
    out = []
    for i in range(count):
        form, J = combos[i % len(combos)]
        rng = substream(seed, "fixtures", i)
        k = int(rng.integers(1, 3))
        n = int(rng.integers(80, 201))
        means = rng.uniform(0.5, 4.0, size=(J, k))
        kinds = ["constant", "heterogeneous"] + (["logistic"] if J == 2 else [])
        kind = kinds[(i // len(combos)) % len(kinds)]
        if kind == "heterogeneous":
            u = rng.dirichlet(rng.uniform(0.5, 3.0, size=J), size=n)
            coupling = rng.uniform(0.0, 0.9)
            X = rng.poisson(means[:, None, :] * ((1 - coupling) + coupling * J * u.T)[:, :, None]).astype(float)
            lam = u
        else:
            X = rng.poisson(means[:, None, :], size=(J, n, k)).astype(float)
            if kind == "constant":
                lam = np.tile(rng.dirichlet(np.ones(J)), (n, 1))
            else:
                g0, g1 = rng.normal(0, 0.5), rng.normal(0, 0.7, size=k)
                p1 = 1.0 / (1.0 + np.exp(-(g0 + (X[0] - X[1]) @ g1)))
                lam = np.column_stack([p1, 1 - p1])
        beta0 = float(rng.uniform(-1.0, 2.0))
        if form == "common-stacked":
            slopes = np.tile(rng.uniform(-1.0, 1.0, size=k), (J, 1))
        else:
            slopes = rng.uniform(-1.0, 1.0, size=(J, k))
        sigma = float(rng.uniform(0.5, 2.0))
        out.append(MCFixture(X, lam, beta0, slopes, form, sigma, name=f"fx{i:02d}-{form}-J{J}-k{k}-{kind}"))
    return out
