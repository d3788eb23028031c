import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fraglab.datagen import DGPConfig, ExposureSpec, generate_population
from fraglab.errors import ConfigError, SingularDesignError
from fraglab.estimators import estimate_fragmented, estimate_mixed, estimate_true, mixed_users, ols
from fraglab.fragmentation import AssignmentMatrix, DesignMatrices, draw_assignment, fragment
from fraglab.scenarios import table1_population


def table1(panel):
    pop = table1_population(panel)
    return pop, fragment(pop, AssignmentMatrix.constant(2, 0, 2))


@pytest.mark.parametrize("panel, slope, intercept", [("b", 0.4, -0.1), ("c", -0.4, 1.1)])
def test_table1_fragmented_slopes(panel, slope, intercept):
    _, f = table1(panel)
    rep = estimate_fragmented(f)
    assert rep.coef("x1") == pytest.approx(slope, abs=1e-12)
    assert rep.coef("intercept") == pytest.approx(intercept, abs=1e-12)
    # hand value: rss 0.2 on 2 residual df, Sxx = 5
    assert rep.se("x1") == pytest.approx(np.sqrt(0.1 / 5), abs=1e-12)


def test_table1_true_regression_is_flat_and_exact():
    pop, _ = table1("b")
    rep = estimate_true(pop)
    assert rep.coef("x1") == pytest.approx(0.0, abs=1e-12)
    assert rep.coef("intercept") == pytest.approx(1.0, abs=1e-12)
    assert rep.rss == pytest.approx(0.0, abs=1e-24)
    assert np.all(np.isnan(rep.standard_errors))


def test_interpolation_has_zero_rss():
    X = np.column_stack([np.ones(3), [0.0, 1.0, 3.0]])
    rep = ols(DesignMatrices("common", np.array([1.0, 2.0, 4.0]), X, ["intercept", "x1"]))
    assert rep.rss == pytest.approx(0.0, abs=1e-24)
    assert rep.coefficients == pytest.approx([1.0, 1.0], abs=1e-12)


@pytest.mark.parametrize("X", [
    np.column_stack([np.ones(4), np.full(4, 2.0)]),
    np.column_stack([np.ones(4), [1.0, 2, 3, 4], [2.0, 4, 6, 8]]),
    np.ones((1, 2)),
])
def test_singular_design_raises(X):
    d = DesignMatrices("common", np.zeros(X.shape[0]), X, [f"c{i}" for i in range(X.shape[1])])
    with pytest.raises(SingularDesignError):
        ols(d)


@given(st.integers(0, 2**31), st.integers(5, 60), st.integers(1, 4))
def test_residuals_orthogonal_to_design(seed, n, k):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n + k), rng.normal(size=(n + k, k))])
    Y = rng.normal(size=n + k)
    rep = ols(DesignMatrices("common", Y, X, [f"c{i}" for i in range(k + 1)]))
    resid = Y - X @ rep.coefficients
    assert np.max(np.abs(X.T @ resid)) <= 1e-9 * max(1.0, np.max(np.abs(X.T @ Y)))
    ref, *_ = np.linalg.lstsq(X, Y, rcond=None)
    assert np.allclose(rep.coefficients, ref, rtol=0, atol=1e-10)


def population(seed=3, n=400, J=2, k=2):
    cfg = DGPConfig(n_users=n, n_devices=J, n_covariates=k, beta0=1.0, beta1=[0.5, -0.2],
                    exposure=ExposureSpec(mean=2.0), seed=seed)
    pop = generate_population(cfg)
    return pop, draw_assignment(pop)


def test_mixed_endpoints():
    pop, a = population()
    f = fragment(pop, a)
    r0 = estimate_mixed(pop, a, 0.0, f=f)
    r1 = estimate_mixed(pop, a, 1.0, f=f)
    assert np.allclose(r0.beta_mixed, estimate_true(pop).coefficients, rtol=0, atol=1e-10)
    assert np.allclose(r1.beta_mixed, estimate_fragmented(f).coefficients, rtol=0, atol=1e-10)
    assert r0.n_fragmented_users == 0 and r1.n_fragmented_users == pop.n_users


@pytest.mark.parametrize("r", [0.1, 0.25, 0.5, 0.9])
def test_mixed_decomposition_identity(r):
    pop, a = population()
    rep = estimate_mixed(pop, a, r)
    assert rep.identity_residual <= 1e-10
    assert rep.n_fragmented_users == int(np.floor(r * pop.n_users + 0.5))


def test_mixed_rounding_note_and_range():
    pop, a = population(n=10)
    rep = estimate_mixed(pop, a, 0.01)
    assert rep.n_fragmented_users == 0
    assert any("rounds to 0" in s for s in rep.notes)
    with pytest.raises(ConfigError):
        estimate_mixed(pop, a, 1.5)


def test_mixed_users_deterministic():
    assert np.array_equal(mixed_users(100, 0.3, 5), mixed_users(100, 0.3, 5))
    assert mixed_users(100, 0.3, 5).size == 30


def test_device_split_returns_one_report_per_device():
    pop, a = population(J=3)
    reps = estimate_fragmented(fragment(pop, a), "device-split")
    assert len(reps) == 3
    assert [r.terms for r in reps] == [["intercept", f"x1_d{j}", f"x2_d{j}"] for j in (1, 2, 3)]
