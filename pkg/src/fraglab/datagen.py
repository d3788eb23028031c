"""Synthetic user-level populations for the fragmentation experiments.

The outcome model is linear in per-device exposures::

    y_i = beta0 + sum_j x_ij' beta_j + eps_i

with a single common slope vector (``beta1``) or one slope vector per device
(``beta_by_device``). Exposures are drawn per device; the user's total
exposure is the sum over devices. Noise is Gaussian and drawn from its own
random stream, independent of everything else.
"""

from __future__ import annotations

import csv
import re
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import special, stats

from .errors import ConfigError, ParseError
from .rng import check_seed, substream

EXPOSURE_FAMILIES = ("poisson", "lognormal-rounded", "fixed-matrix")
PREFERENCE_KINDS = ("constant", "logistic", "heterogeneous")


@dataclass(frozen=True)
class ExposureSpec:
    """How per-device exposures are drawn.

    ``mean`` and ``variance`` broadcast to shape ``(J, k)``; a flat list of
    length ``J`` gives one value per device. ``variance`` is
    only read by the lognormal family (Poisson variance equals its mean).
    ``rho`` is the cross-device correlation of the Gaussian copula, applied
    covariate by covariate. ``activity_coupling`` in [0, 1] scales user i's
    device-j mean by ``(1 - a) + a * J * u_ij`` where ``u_i`` is the user's
    heterogeneous device-preference vector, which produces same-device
    activity bias.
    """

    family: str = "poisson"
    mean: Any = 1.0
    variance: Any = None
    rho: float = 0.0
    activity_coupling: float = 0.0
    matrices: Any = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExposureSpec":
        d = dict(d)
        if "matrices" in d and d["matrices"] is not None:
            d["matrices"] = np.asarray(d["matrices"], dtype=float)
        _reject_unknown(cls, d, "exposure")
        return cls(**d)

    def to_dict(self) -> dict:
        out = {
            "family": self.family,
            "mean": _jsonable(self.mean),
            "variance": _jsonable(self.variance),
            "rho": self.rho,
            "activity_coupling": self.activity_coupling,
        }
        if self.matrices is not None:
            out["matrices"] = np.asarray(self.matrices).tolist()
        return out


@dataclass(frozen=True)
class PreferenceSpec:
    """Device-preference model for where a user's purchase lands.

    ``constant``: every user shares the probability vector ``lam``.
    ``logistic`` (J = 2 only): P(device 1) = sigmoid(gamma0 + gamma1'(x_1 - x_2)).
    ``heterogeneous``: per-user vectors from Dirichlet(``concentration``).
    """

    kind: str = "constant"
    lam: Any = None
    gamma0: float = 0.0
    gamma1: Any = None
    concentration: Any = 1.0

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PreferenceSpec":
        d = dict(d)
        _reject_unknown(cls, d, "preference")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lam": _jsonable(self.lam),
            "gamma0": self.gamma0,
            "gamma1": _jsonable(self.gamma1),
            "concentration": _jsonable(self.concentration),
        }


@dataclass(frozen=True)
class DGPConfig:
    n_users: int
    n_devices: int = 2
    n_covariates: int = 1
    beta0: float = 0.0
    beta1: Any = None
    beta_by_device: Any = None
    exposure: ExposureSpec = field(default_factory=ExposureSpec)
    noise_sigma: float = 1.0
    preference: PreferenceSpec = field(default_factory=PreferenceSpec)
    seed: int = 0

    def __post_init__(self):
        _validate(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DGPConfig":
        d = dict(d)
        if "exposure" in d and not isinstance(d["exposure"], ExposureSpec):
            d["exposure"] = ExposureSpec.from_dict(d["exposure"])
        if "preference" in d and not isinstance(d["preference"], PreferenceSpec):
            d["preference"] = PreferenceSpec.from_dict(d["preference"])
        _reject_unknown(cls, d, "dgp")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "n_devices": self.n_devices,
            "n_covariates": self.n_covariates,
            "beta0": self.beta0,
            "beta1": _jsonable(self.beta1),
            "beta_by_device": _jsonable(self.beta_by_device),
            "exposure": self.exposure.to_dict(),
            "noise_sigma": self.noise_sigma,
            "preference": self.preference.to_dict(),
            "seed": self.seed,
        }

    @property
    def model_form(self) -> str:
        return "common" if self.beta1 is not None else "device-specific"

    def slopes(self) -> np.ndarray:
        """Slope truth as a ``(J, k)`` array (rows identical for common effect)."""
        J, k = self.n_devices, self.n_covariates
        if self.beta1 is not None:
            return np.broadcast_to(np.asarray(self.beta1, dtype=float).reshape(k), (J, k)).copy()
        return np.asarray(self.beta_by_device, dtype=float).reshape(J, k)


@dataclass
class PreferenceModel:
    """Realised per-user device probabilities (rows of ``probs`` sum to 1)."""

    kind: str
    probs: np.ndarray | None
    params: dict = field(default_factory=dict)

    @property
    def lam1(self) -> np.ndarray:
        """Probability that the purchase lands on device 1."""
        if self.probs is None:
            raise ConfigError("preference model is external/unknown", field="preference")
        return self.probs[:, 0]


@dataclass
class Population:
    """Un-fragmented truth.

    ``X`` has shape ``(J, n, k)``: device-major exposure matrices.
    """

    X: np.ndarray
    y: np.ndarray
    preference: PreferenceModel
    eps: np.ndarray | None = None
    strata: dict[str, np.ndarray] = field(default_factory=dict)
    config: DGPConfig | None = None
    user_ids: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 3:
            raise ConfigError("exposures must have shape (J, n, k)", field="exposures")
        if self.X.shape[1] != self.y.shape[0]:
            raise ConfigError("exposures and outcomes disagree on n_users", field="exposures")
        if not np.all(np.isfinite(self.X)):
            raise ConfigError("exposures contain non-finite values", field="exposures")
        if self.user_ids is None:
            self.user_ids = np.arange(1, self.n_users + 1)

    @property
    def n_devices(self) -> int:
        return self.X.shape[0]

    @property
    def n_users(self) -> int:
        return self.X.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.X.shape[2]

    @property
    def total_exposure(self) -> np.ndarray:
        return self.X.sum(axis=0)

    @property
    def seed(self) -> int | None:
        return None if self.config is None else self.config.seed


# ---------------------------------------------------------------------------
# validation helpers


def _reject_unknown(cls, d: Mapping[str, Any], where: str) -> None:
    known = set(cls.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", field=where)


def _jsonable(v):
    if v is None:
        return None
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _broadcast(value, shape, name) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
        return np.broadcast_to(arr, shape).copy()
    except ValueError:
        raise ConfigError(f"cannot broadcast to shape {shape}", field=name) from None


def _device_grid(value, J: int, k: int, name: str) -> np.ndarray:
    """Broadcast to ``(J, k)``; a flat list of length ``J`` is read per device."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1 and arr.shape[0] == J:
        arr = arr[:, None]
    return _broadcast(arr, (J, k), name)


def _validate(cfg: DGPConfig) -> None:
    J, k = cfg.n_devices, cfg.n_covariates
    if int(cfg.n_users) < 1:
        raise ConfigError("must be a positive integer", field="n_users")
    if int(J) < 2:
        raise ConfigError("need at least 2 devices", field="n_devices")
    if int(k) < 1:
        raise ConfigError("need at least 1 covariate", field="n_covariates")
    if cfg.noise_sigma < 0:
        raise ConfigError("must be nonnegative", field="noise_sigma")
    try:
        check_seed(cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc), field="seed") from None
    if (cfg.beta1 is None) == (cfg.beta_by_device is None):
        raise ConfigError("set exactly one of beta1 / beta_by_device", field="beta1")
    if cfg.beta1 is not None and np.asarray(cfg.beta1, dtype=float).size != k:
        raise ConfigError(f"expected {k} values", field="beta1")
    if cfg.beta_by_device is not None and np.asarray(cfg.beta_by_device, dtype=float).size != J * k:
        raise ConfigError(f"expected {J}x{k} values", field="beta_by_device")

    ex = cfg.exposure
    if ex.family not in EXPOSURE_FAMILIES:
        raise ConfigError(f"unknown family {ex.family!r}", field="exposure.family")
    if not -1.0 <= ex.rho <= 1.0:
        raise ConfigError("must lie in [-1, 1]", field="exposure.rho")
    if ex.rho < -1.0 / (J - 1):
        raise ConfigError(f"equicorrelation below -1/(J-1) = {-1 / (J - 1):.3f} is not positive semidefinite",
                          field="exposure.rho")
    if not 0.0 <= ex.activity_coupling <= 1.0:
        raise ConfigError("must lie in [0, 1]", field="exposure.activity_coupling")
    if ex.activity_coupling > 0 and cfg.preference.kind != "heterogeneous":
        raise ConfigError("activity coupling needs the heterogeneous preference kind",
                          field="exposure.activity_coupling")
    if ex.family == "fixed-matrix":
        if ex.matrices is None:
            raise ConfigError("fixed-matrix family needs matrices", field="exposure.matrices")
        m = np.asarray(ex.matrices, dtype=float)
        if m.shape != (J, cfg.n_users, k):
            raise ConfigError(f"shape {m.shape} != {(J, cfg.n_users, k)}", field="exposure.matrices")
        if not np.all(np.isfinite(m)):
            raise ConfigError("non-finite entries", field="exposure.matrices")
    else:
        mean = _device_grid(ex.mean, J, k, "exposure.mean")
        if np.any(mean < 0) or not np.all(np.isfinite(mean)):
            raise ConfigError("means must be finite and nonnegative", field="exposure.mean")
        if ex.family == "lognormal-rounded":
            if ex.variance is None:
                raise ConfigError("lognormal-rounded needs variance", field="exposure.variance")
            var = _device_grid(ex.variance, J, k, "exposure.variance")
            if np.any(var < 0):
                raise ConfigError("variances must be nonnegative", field="exposure.variance")
            if np.any(mean <= 0):
                raise ConfigError("lognormal means must be positive", field="exposure.mean")

    pref = cfg.preference
    if pref.kind not in PREFERENCE_KINDS:
        raise ConfigError(f"unknown kind {pref.kind!r}", field="preference.kind")
    if pref.kind == "constant" and pref.lam is not None:
        lam = np.asarray(pref.lam, dtype=float)
        if lam.shape != (J,):
            raise ConfigError(f"expected {J} probabilities", field="preference.lam")
        if np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-12:
            raise ConfigError("must be a probability vector", field="preference.lam")
    if pref.kind == "logistic":
        if J != 2:
            raise ConfigError("logistic preference is defined for J = 2 only", field="preference.kind")
        if pref.gamma1 is None or np.asarray(pref.gamma1, dtype=float).size != k:
            raise ConfigError(f"expected {k} values", field="preference.gamma1")
    if pref.kind == "heterogeneous":
        conc = _broadcast(pref.concentration, (J,), "preference.concentration")
        if np.any(conc <= 0):
            raise ConfigError("must be positive", field="preference.concentration")


# ---------------------------------------------------------------------------
# generation


def _equicorrelation_root(J: int, rho: float) -> np.ndarray:
    R = (1.0 - rho) * np.eye(J) + rho * np.ones((J, J))
    w, V = np.linalg.eigh(R)
    return V * np.sqrt(np.clip(w, 0.0, None))


def _draw_exposures(cfg: DGPConfig, u: np.ndarray | None, rng: np.random.Generator) -> np.ndarray:
    J, n, k = cfg.n_devices, cfg.n_users, cfg.n_covariates
    ex = cfg.exposure
    if ex.family == "fixed-matrix":
        return np.array(ex.matrices, dtype=float)

    mean = _device_grid(ex.mean, J, k, "exposure.mean")[:, None, :] * np.ones((J, n, k))
    scale = np.ones((J, n, 1))
    if ex.activity_coupling > 0:
        a = ex.activity_coupling
        scale = ((1.0 - a) + a * J * u.T)[:, :, None]
    mean = mean * scale

    if ex.rho == 0.0:
        if ex.family == "poisson":
            return rng.poisson(mean).astype(float)
        z = rng.standard_normal((J, n, k))
    else:
        L = _equicorrelation_root(J, ex.rho)
        z = np.einsum("ab,bnk->ank", L, rng.standard_normal((J, n, k)))

    if ex.family == "poisson":
        p = np.clip(special.ndtr(z), 0.0, np.nextafter(1.0, 0.0))
        return stats.poisson.ppf(p, mean)

    var = _device_grid(ex.variance, J, k, "exposure.variance")[:, None, :] * scale**2
    s2 = np.log1p(var / mean**2)
    mu = np.log(mean) - s2 / 2.0
    return np.rint(np.exp(mu + np.sqrt(s2) * z))


def _preference(cfg: DGPConfig, X: np.ndarray, u: np.ndarray | None) -> PreferenceModel:
    J, n = cfg.n_devices, cfg.n_users
    pref = cfg.preference
    if pref.kind == "constant":
        lam = np.full(J, 1.0 / J) if pref.lam is None else np.asarray(pref.lam, dtype=float)
        return PreferenceModel("constant", np.tile(lam, (n, 1)), {"lam": lam.tolist()})
    if pref.kind == "logistic":
        g1 = np.asarray(pref.gamma1, dtype=float).reshape(-1)
        lam1 = special.expit(pref.gamma0 + (X[0] - X[1]) @ g1)
        return PreferenceModel("logistic", np.column_stack([lam1, 1.0 - lam1]),
                               {"gamma0": float(pref.gamma0), "gamma1": g1.tolist()})
    return PreferenceModel("heterogeneous", u,
                           {"concentration": _broadcast(pref.concentration, (J,), "c").tolist()})


def outcome(X: np.ndarray, beta0: float, slopes: np.ndarray, eps: np.ndarray, common: bool) -> np.ndarray:
    """Evaluate the linear outcome model; ``slopes`` is ``(J, k)``."""
    if common:
        return beta0 + X.sum(axis=0) @ slopes[0] + eps
    return beta0 + np.einsum("jnk,jk->n", X, slopes) + eps


def generate_population(config: DGPConfig) -> Population:
    """Draw a population from ``config``; identical configs give identical arrays."""
    J, n = config.n_devices, config.n_users
    seed = config.seed

    u = None
    if config.preference.kind == "heterogeneous":
        conc = _broadcast(config.preference.concentration, (J,), "preference.concentration")
        u = substream(seed, "preference").dirichlet(conc, size=n)
    X = _draw_exposures(config, u, substream(seed, "exposure"))
    preference = _preference(config, X, u)

    if config.noise_sigma > 0:
        eps = substream(seed, "noise").normal(0.0, config.noise_sigma, n)
    else:
        eps = np.zeros(n)
    y = outcome(X, float(config.beta0), config.slopes(), eps, config.model_form == "common")
    return Population(X=X, y=y, eps=eps, preference=preference, config=config)


# ---------------------------------------------------------------------------
# strata


def _strata_values(name: str, spec, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec, Mapping):
        if "levels" in spec:
            spec = spec["levels"]
        elif "range" in spec:
            lo, hi = (int(v) for v in spec["range"])
            width = int(spec.get("bucket", 1))
            if hi < lo or width < 1:
                raise ConfigError("bad range/bucket", field=f"strata.{name}")
            v = rng.integers(lo, hi + 1, size=n)
            return lo + width * ((v - lo) // width)
        else:
            raise ConfigError("expected 'levels' or 'range'", field=f"strata.{name}")
    if isinstance(spec, (list, tuple)):
        lo, hi = (int(v) for v in spec)
        if hi < lo:
            raise ConfigError("empty range", field=f"strata.{name}")
        return rng.integers(lo, hi + 1, size=n)
    card = int(spec)
    if card < 1:
        raise ConfigError("cardinality must be at least 1", field=f"strata.{name}")
    return rng.integers(1, card + 1, size=n)


def attach_strata(pop: Population, strata_spec: Mapping[str, Any], seed: int | None = None) -> Population:
    """Give every user one uniformly drawn value per categorical variable.

    ``strata_spec`` maps a variable name to a cardinality (values ``1..c``),
    an inclusive integer range ``[lo, hi]``, or
    ``{"range": [lo, hi], "bucket": width}`` for bucketed ranges.
    Each variable draws from its own stream keyed by its name, so adding a
    variable leaves the others unchanged.
    """
    if not strata_spec:
        return pop
    if seed is None:
        seed = pop.seed
    if seed is None:
        raise ConfigError("population has no seed; pass one explicitly", field="seed")
    strata = dict(pop.strata)
    for name, spec in strata_spec.items():
        rng = substream(seed, "strata", zlib.crc32(name.encode()))
        strata[name] = _strata_values(name, spec, pop.n_users, rng)
    return replace(pop, strata=strata)


# ---------------------------------------------------------------------------
# CSV


_XCOL = re.compile(r"^x(\d+)_d(\d+)$")


def write_population_csv(pop: Population, path) -> None:
    J, n, k = pop.X.shape
    names = [f"x{c + 1}_d{j + 1}" for c in range(k) for j in range(J)]
    strata = sorted(pop.strata)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "y", *names, *(f"s_{s}" for s in strata)])
        for i in range(n):
            xs = [repr(float(pop.X[j, i, c])) for c in range(k) for j in range(J)]
            w.writerow([pop.user_ids[i], repr(float(pop.y[i])), *xs, *(pop.strata[s][i] for s in strata)])


def _maybe_int(values: Sequence[str]) -> np.ndarray:
    try:
        return np.array([int(v) for v in values], dtype=np.int64)
    except ValueError:
        return np.array(values, dtype=str)


def load_population_csv(path) -> Population:
    """Read the user-level CSV schema ``user_id, y, x{c}_d{j}..., s_*``."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file (no header)") from None
        rows = [r for r in reader if r]

    for col in ("user_id", "y"):
        if col not in header:
            raise ParseError(f"missing column {col!r}")
    xcols = {}
    for pos, name in enumerate(header):
        m = _XCOL.match(name)
        if m:
            xcols[(int(m.group(1)), int(m.group(2)))] = pos
    if not xcols:
        raise ParseError("missing exposure columns x{c}_d{j}")
    k = max(c for c, _ in xcols)
    J = max(j for _, j in xcols)
    for c in range(1, k + 1):
        for j in range(1, J + 1):
            if (c, j) not in xcols:
                raise ParseError(f"missing column x{c}_d{j} (inconsistent devices/covariates)")
    scols = [(name[2:], pos) for pos, name in enumerate(header) if name.startswith("s_")]
    if not rows:
        raise ParseError("no rows")

    n = len(rows)
    X = np.empty((J, n, k))
    y = np.empty(n)
    ids = []
    strata_raw: dict[str, list[str]] = {s: [] for s, _ in scols}
    iy = header.index("y")
    iu = header.index("user_id")
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", row=r)
        ids.append(row[iu].strip())
        try:
            y[r - 1] = float(row[iy])
        except ValueError:
            raise ParseError(f"non-numeric y {row[iy]!r}", row=r) from None
        for (c, j), pos in xcols.items():
            try:
                X[j - 1, r - 1, c - 1] = float(row[pos])
            except ValueError:
                raise ParseError(f"non-numeric {header[pos]} {row[pos]!r}", row=r) from None
        for s, pos in scols:
            strata_raw[s].append(row[pos].strip())
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ParseError("non-finite numeric cell")
    if J < 2:
        raise ParseError("need at least two devices")
    return Population(
        X=X,
        y=y,
        preference=PreferenceModel("external", None),
        eps=None,
        strata={s: _maybe_int(v) for s, v in strata_raw.items()},
        config=None,
        user_ids=np.array(ids, dtype=str),
    )


def from_exposures(X, y=None, *, beta0: float = 0.0, beta1=None, lam=None, seed: int = 0,
                   noise_sigma: float = 0.0) -> Population:
    """Build a population around fixed exposure matrices (shape ``(J, n, k)``).

    Convenience for fixtures: wraps the ``fixed-matrix`` family. ``lam`` is a
    constant probability vector, or ``None`` for uniform.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[:, :, None]
    J, n, k = X.shape
    if beta1 is None:
        beta1 = [0.0] * k
    cfg = DGPConfig(
        n_users=n, n_devices=J, n_covariates=k, beta0=beta0,
        beta1=list(np.atleast_1d(np.asarray(beta1, dtype=float))),
        exposure=ExposureSpec(family="fixed-matrix", matrices=X),
        noise_sigma=noise_sigma,
        preference=PreferenceSpec(kind="constant", lam=None if lam is None else list(lam)),
        seed=seed,
    )
    pop = generate_population(cfg)
    if y is not None:
        pop = replace(pop, y=np.asarray(y, dtype=float), eps=None)
    return pop
