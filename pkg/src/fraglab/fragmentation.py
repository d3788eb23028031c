"""Split users into device fragments and build stacked regression designs.

Rows of a fragmented dataset produced here are ordered device-major (all
users' device-1 fragments, then device 2, ...), which is the order in which
the reconstruction operator ``W = [I I ... I]`` is defined. The hidden link
from a fragment back to its user (``true_user``) is kept only for oracle and
aggregation code; naive estimators work on :meth:`FragmentedDataset.without_oracle`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import sparse

from .datagen import Population, _maybe_int
from .errors import ConfigError, ParseError
from .rng import substream

FORMS = ("common-stacked", "device-specific-stacked", "device-split")


@dataclass
class AssignmentMatrix:
    """Which device receives each user's outcome (0-based device index)."""

    device: np.ndarray
    n_devices: int

    def __post_init__(self):
        self.device = np.asarray(self.device, dtype=np.int64)
        if self.device.size and (self.device.min() < 0 or self.device.max() >= self.n_devices):
            raise ConfigError("device index out of range", field="assignment")

    @property
    def n_users(self) -> int:
        return self.device.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return self.device + 1

    @property
    def one_hot(self) -> np.ndarray:
        out = np.zeros((self.n_users, self.n_devices))
        out[np.arange(self.n_users), self.device] = 1.0
        return out

    @classmethod
    def constant(cls, n_users: int, device: int, n_devices: int) -> "AssignmentMatrix":
        return cls(np.full(n_users, device, dtype=np.int64), n_devices)


def categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of ``probs``."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def draw_assignment(pop: Population, *, seed: int | None = None, rep: int | None = None) -> AssignmentMatrix:
    """Draw each user's purchase device from their preference vector.

    Randomness comes from the ``assignment`` stream, disjoint from the noise
    stream, so assignment is independent of the outcome noise. ``rep``
    selects an indexed sub-stream for repeated draws.
    """
    if pop.preference.probs is None:
        raise ConfigError("population has no preference model; supply an assignment", field="preference")
    if seed is None:
        seed = pop.seed if pop.seed is not None else 0
    rng = substream(seed, "assignment") if rep is None else substream(seed, "assignment", rep)
    return AssignmentMatrix(categorical(pop.preference.probs, rng), pop.n_devices)


@dataclass
class FragmentedDataset:
    fragment_id: np.ndarray
    device: np.ndarray
    y: np.ndarray
    X: np.ndarray
    n_devices: int
    strata: dict[str, np.ndarray] = field(default_factory=dict)
    true_user: np.ndarray | None = None  # oracle only
    device_labels: list[str] | None = None

    def __post_init__(self):
        self.device = np.asarray(self.device, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.device_labels is None:
            self.device_labels = [str(j + 1) for j in range(self.n_devices)]

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.X.shape[1]

    @property
    def has_oracle(self) -> bool:
        return self.true_user is not None

    def without_oracle(self) -> "FragmentedDataset":
        """View for naive analysis: identical rows, no user linkage."""
        return replace(self, true_user=None)

    @property
    def n_users(self) -> int | None:
        """Users per device when rows form a device-major, user-aligned stack."""
        if self.n_rows % self.n_devices:
            return None
        n = self.n_rows // self.n_devices
        if not np.array_equal(self.device, np.repeat(np.arange(self.n_devices), n)):
            return None
        if self.true_user is not None and not np.array_equal(self.true_user, np.tile(np.arange(n), self.n_devices)):
            return None
        return n

    def canonical(self) -> "FragmentedDataset":
        """Reorder rows device-major, user-minor using the oracle link."""
        if self.true_user is None:
            raise ConfigError("canonical ordering needs the true_user oracle column", field="true_user")
        order = np.lexsort((self.true_user, self.device))
        users, inverse = np.unique(self.true_user, return_inverse=True)
        return replace(
            self,
            fragment_id=self.fragment_id[order],
            device=self.device[order],
            y=self.y[order],
            X=self.X[order],
            strata={k: v[order] for k, v in self.strata.items()},
            true_user=inverse[order],
        )

    def device_blocks(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(Y, X)`` shaped ``(J, n)`` and ``(J, n, k)``; needs an aligned stack."""
        n = self.n_users
        if n is None:
            raise ConfigError("rows are not a user-aligned device-major stack", field="rows")
        J = self.n_devices
        return self.y.reshape(J, n), self.X.reshape(J, n, self.n_covariates)


def fragment(pop: Population, a: AssignmentMatrix, *, seed: int | None = None) -> FragmentedDataset:
    """Split every user into ``J`` fragments.

    Fragment ``(i, j)`` carries device-``j`` exposures of user ``i``; the
    whole outcome ``y_i`` goes to the fragment of the assigned device and the
    others get 0. Strata are copied from the user. Fragment ids are a random
    permutation so they carry no user information.
    """
    J, n, k = pop.X.shape
    if a.n_users != n or a.n_devices != J:
        raise ConfigError(f"assignment is {a.n_users}x{a.n_devices}, population is {n}x{J}", field="assignment")
    onehot = a.one_hot  # (n, J)
    Y = (onehot.T * pop.y[None, :]).reshape(J * n)
    X = pop.X.reshape(J * n, k)
    if seed is None:
        seed = pop.seed if pop.seed is not None else 0
    ids = substream(seed, "fragment-ids").permutation(J * n) + 1
    return FragmentedDataset(
        fragment_id=ids,
        device=np.repeat(np.arange(J), n),
        y=Y,
        X=X.copy(),
        n_devices=J,
        strata={s: np.tile(v, J) for s, v in pop.strata.items()},
        true_user=np.tile(np.arange(n), J),
    )


# ---------------------------------------------------------------------------
# designs


@dataclass
class DesignMatrices:
    model_form: str
    Y: np.ndarray
    X: np.ndarray
    terms: list[str]
    n_devices: int = 1
    omega: np.ndarray | None = None  # diagonal of the reconstruction scaling
    n_users: int | None = None  # set when rows form an aligned device-major stack
    device: int | None = None  # for device-split designs

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_params(self) -> int:
        return self.X.shape[1]

    def W(self) -> sparse.csr_matrix:
        """Horizontal concatenation of ``J`` identities (``n x J n``)."""
        if self.n_users is None:
            raise ConfigError("W is only defined for aligned stacks", field="design")
        eye = sparse.identity(self.n_users, format="csr")
        return sparse.hstack([eye] * self.n_devices, format="csr")

    def reconstruct(self) -> np.ndarray:
        """``W X Omega``: the un-fragmented design implied by the stack."""
        return np.asarray(self.W() @ self.X) * self.omega[None, :]


def covariate_names(k: int) -> list[str]:
    return [f"x{c + 1}" for c in range(k)]


def stack_common(f: FragmentedDataset) -> DesignMatrices:
    """Every fragment is a row; one shared slope vector: ``[1, x_frag]``."""
    k = f.n_covariates
    X = np.column_stack([np.ones(f.n_rows), f.X])
    omega = np.ones(1 + k)
    omega[0] = 1.0 / f.n_devices
    return DesignMatrices("common-stacked", f.y.copy(), X, ["intercept", *covariate_names(k)],
                          n_devices=f.n_devices, omega=omega, n_users=f.n_users)


def stack_device_specific(f: FragmentedDataset) -> DesignMatrices:
    """Block layout ``[1 | X_1 0 .. | 0 X_2 .. | ...]``: one slope block per device."""
    J, k = f.n_devices, f.n_covariates
    if J < 2:
        raise ConfigError("device-specific stacking needs at least 2 devices", field="n_devices")
    X = np.zeros((f.n_rows, 1 + J * k))
    X[:, 0] = 1.0
    for j in range(J):
        rows = f.device == j
        X[rows, 1 + j * k:1 + (j + 1) * k] = f.X[rows]
    omega = np.ones(1 + J * k)
    omega[0] = 1.0 / J
    terms = ["intercept"] + [f"{c}_d{j + 1}" for j in range(J) for c in covariate_names(k)]
    return DesignMatrices("device-specific-stacked", f.y.copy(), X, terms,
                          n_devices=J, omega=omega, n_users=f.n_users)


def split_by_device(f: FragmentedDataset) -> list[DesignMatrices]:
    """One ``[1, X_j]`` design per device with that device's fragment outcomes."""
    k = f.n_covariates
    out = []
    for j in range(f.n_devices):
        rows = f.device == j
        X = np.column_stack([np.ones(int(rows.sum())), f.X[rows]])
        out.append(DesignMatrices("device-split", f.y[rows].copy(), X,
                                  ["intercept", *(f"{c}_d{j + 1}" for c in covariate_names(k))],
                                  n_devices=1, device=j))
    return out


def stack(f: FragmentedDataset, form: str):
    if form == "common-stacked":
        return stack_common(f)
    if form == "device-specific-stacked":
        return stack_device_specific(f)
    if form == "device-split":
        return split_by_device(f)
    raise ConfigError(f"unknown model form {form!r}; expected one of {FORMS}", field="form")


def true_design(pop: Population, form: str = "common") -> DesignMatrices:
    """Design of the un-fragmented regression: ``[1, sum_j X_j]`` or ``[1, X_1, ..., X_J]``."""
    J, n, k = pop.X.shape
    if form == "common":
        X = np.column_stack([np.ones(n), pop.total_exposure])
        terms = ["intercept", *covariate_names(k)]
    elif form == "device-specific":
        X = np.column_stack([np.ones(n), *(pop.X[j] for j in range(J))])
        terms = ["intercept"] + [f"{c}_d{j + 1}" for j in range(J) for c in covariate_names(k)]
    else:
        raise ConfigError(f"unknown true-data form {form!r}", field="form")
    return DesignMatrices(f"true-{form}", pop.y.copy(), X, terms)


# ---------------------------------------------------------------------------
# CSV


def write_fragments_csv(f: FragmentedDataset, path, *, include_oracle: bool = True) -> None:
    k = f.n_covariates
    strata = sorted(f.strata)
    oracle = include_oracle and f.true_user is not None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        head = ["fragment_id", "device", "y", *covariate_names(k), *(f"s_{s}" for s in strata)]
        w.writerow(head + (["true_user_id"] if oracle else []))
        for r in range(f.n_rows):
            row = [int(f.fragment_id[r]), f.device_labels[f.device[r]], repr(float(f.y[r])),
                   *(repr(float(v)) for v in f.X[r]), *(f.strata[s][r] for s in strata)]
            if oracle:
                row.append(int(f.true_user[r]) + 1)
            w.writerow(row)


def _label_key(s: str):
    # integers in numeric order, then anything else lexically
    return (not s.isdigit(), int(s) if s.isdigit() else 0, s)


def load_fragments_csv(path) -> FragmentedDataset:
    """Read ``fragment_id, device, y, x1..xk, [s_*], [true_user_id]``."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file (no header)") from None
        rows = [r for r in reader if r]
    for col in ("fragment_id", "device", "y"):
        if col not in header:
            raise ParseError(f"missing column {col!r}")
    k = 0
    while f"x{k + 1}" in header:
        k += 1
    if k == 0:
        raise ParseError("missing exposure column x1")
    if not rows:
        raise ParseError("no rows")
    pos = {h: i for i, h in enumerate(header)}
    scols = [h for h in header if h.startswith("s_")]
    has_oracle = "true_user_id" in pos

    n = len(rows)
    ids = np.empty(n, dtype=np.int64)
    dev_raw, strata_raw, users = [], {s[2:]: [] for s in scols}, []
    y = np.empty(n)
    X = np.empty((n, k))
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", row=r)
        try:
            ids[r - 1] = int(row[pos["fragment_id"]])
            y[r - 1] = float(row[pos["y"]])
            X[r - 1] = [float(row[pos[f"x{c + 1}"]]) for c in range(k)]
        except ValueError as exc:
            raise ParseError(f"non-numeric cell ({exc})", row=r) from None
        dev_raw.append(row[pos["device"]].strip())
        for s in scols:
            strata_raw[s[2:]].append(row[pos[s]].strip())
        if has_oracle:
            users.append(row[pos["true_user_id"]].strip())

    labels = sorted(set(dev_raw), key=_label_key)
    lookup = {lab: i for i, lab in enumerate(labels)}
    true_user = None
    if has_oracle:
        order = {u: i for i, u in enumerate(sorted(set(users), key=_label_key))}
        true_user = np.array([order[u] for u in users])
    return FragmentedDataset(
        fragment_id=ids,
        device=np.array([lookup[d] for d in dev_raw]),
        y=y,
        X=X,
        n_devices=len(labels),
        strata={s: _maybe_int(v) for s, v in strata_raw.items()},
        true_user=true_user,
        device_labels=labels,
    )
