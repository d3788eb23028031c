import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import linalg

from conftest import expected_stack_coefficients
from fraglab.biascalc import (
    bias_common,
    bias_common_J,
    bias_common_scalar,
    bias_device_specific_J,
    bias_device_specific_split,
    bias_device_specific_stacked,
    check_stc,
    correlation_diagnostic,
    diagnose_matrix,
    lambda_matrix,
    plugin_lambda,
    scalar_moments,
    stc_statistics,
    vartheta_common,
    vartheta_dense,
    vartheta_device_specific,
)
from fraglab.errors import ConfigError, SingularDesignError
from fraglab.fragmentation import AssignmentMatrix, fragment
from fraglab.scenarios import randomization_exposures, table1_population

TOL = 1e-10


def common_design(X):
    J, n, k = X.shape
    return np.column_stack([np.ones(J * n), X.reshape(J * n, k)])


def device_design(X):
    J, n, k = X.shape
    return np.column_stack([np.ones(J * n), linalg.block_diag(*X)])


def draw(seed, J=2, n=30, k=2):
    rng = np.random.default_rng(seed)
    X = rng.gamma(2.0, 1.0, size=(J, n, k))
    lam = rng.dirichlet(np.ones(J), size=n)
    return rng, X, lam


def close(a, b):
    scale = max(1.0, float(np.max(np.abs(b))))
    assert np.max(np.abs(np.asarray(a) - np.asarray(b))) <= TOL * scale


def test_vartheta_table1b():
    pop = table1_population("b")
    f = fragment(pop, AssignmentMatrix.constant(2, 0, 2))
    _, X = f.canonical().device_blocks()
    assert vartheta_common(X)[0, 0] == pytest.approx(0.2, abs=1e-14)


@pytest.mark.parametrize("seed", range(100))
def test_vartheta_schur_matches_dense(seed):
    rng = np.random.default_rng(seed)
    J, n, k = rng.integers(2, 5), rng.integers(8, 40), rng.integers(1, 4)
    X = rng.normal(size=(J, n, k)) * rng.uniform(0.5, 3, size=k) + rng.uniform(-2, 2, size=k)
    close(vartheta_common(X), vartheta_dense(common_design(X)))
    close(vartheta_device_specific(X), vartheta_dense(device_design(X)))


@given(st.integers(0, 2**31), st.floats(-3, 3), st.integers(1, 3))
def test_common_J2_matches_exact_oracle(seed, beta0, k):
    _, X, lam = draw(seed, 2, 25, k)
    beta1 = np.linspace(0.3, -0.4, k)
    exp = expected_stack_coefficients(common_design(X), X, lam, beta0, beta1[None, :])
    rep = bias_common(X[0], X[1], lam[:, 0], beta0, beta1)
    close(rep.total, exp[1:] - beta1)
    close(rep.total, bias_common_J(X, lam, beta0, beta1).total)


@pytest.mark.parametrize("J", [2, 3, 5])
@pytest.mark.parametrize("seed", range(5))
def test_common_J_matches_exact_oracle(J, seed):
    _, X, lam = draw(seed, J, 40, 2)
    beta1 = np.array([0.7, -0.2])
    exp = expected_stack_coefficients(common_design(X), X, lam, 1.3, beta1[None, :])
    close(bias_common_J(X, lam, 1.3, beta1).total, exp[1:] - beta1)


@pytest.mark.parametrize("seed", range(10))
def test_device_specific_stacked_matches_exact_oracle(seed):
    _, X, lam = draw(seed, 2, 30, 2)
    b1, b2 = np.array([0.5, 0.1]), np.array([-0.3, 0.8])
    exp = expected_stack_coefficients(device_design(X), X, lam, -0.7, np.vstack([b1, b2]), common=False)
    rep = bias_device_specific_stacked(X[0], X[1], lam[:, 0], -0.7, b1, b2)
    close(rep.total, exp[1:] - np.concatenate([b1, b2]))
    close(rep.total, bias_device_specific_J(X, lam, -0.7, [b1, b2], "stacked").total)


@pytest.mark.parametrize("J", [2, 3, 4])
@pytest.mark.parametrize("seed", range(5))
def test_device_specific_J_matches_exact_oracle(J, seed):
    rng, X, lam = draw(seed, J, 35, 2)
    B = rng.normal(size=(J, 2))
    exp = expected_stack_coefficients(device_design(X), X, lam, 0.9, B, common=False)
    close(bias_device_specific_J(X, lam, 0.9, B, "stacked").total, exp[1:] - B.reshape(-1))
    mean_y = 0.9 + np.einsum("jnk,jk->n", X, B)
    for j, rep in enumerate(bias_device_specific_J(X, lam, 0.9, B, "split")):
        D = np.column_stack([np.ones(X.shape[1]), X[j]])
        coef, *_ = np.linalg.lstsq(D, lam[:, j] * mean_y, rcond=None)
        close(rep.total, coef[1:] - B[j])


@pytest.mark.parametrize("seed", range(10))
def test_device_specific_split_matches_exact_oracle(seed):
    _, X, lam = draw(seed, 2, 30, 2)
    b1, b2 = np.array([0.5, 0.1]), np.array([-0.3, 0.8])
    mean_y = 1.1 + X[0] @ b1 + X[1] @ b2
    reps = bias_device_specific_split(X[0], X[1], lam[:, 0], b1, b2, beta0=1.1)
    for j, (rep, b) in enumerate(zip(reps, (b1, b2))):
        D = np.column_stack([np.ones(X.shape[1]), X[j]])
        coef, *_ = np.linalg.lstsq(D, lam[:, j] * mean_y, rcond=None)
        close(rep.total, coef[1:] - b)
    J_form = bias_device_specific_J(X, lam, 1.1, [b1, b2], "split")
    for a, b in zip(reps, J_form):
        close(a.total, b.total)


def test_split_without_intercept_matches_origin_regression():
    _, X, lam = draw(3, 2, 30, 1)
    mean_y = X[0] @ [0.4] + X[1] @ [0.2]
    reps = bias_device_specific_split(X[0], X[1], lam[:, 0], [0.4], [0.2], intercept=False)
    for j, (rep, b) in enumerate(zip(reps, (0.4, 0.2))):
        coef, *_ = np.linalg.lstsq(X[j], lam[:, j] * mean_y, rcond=None)
        close(rep.total, coef - b)


@pytest.mark.parametrize("lam", [0.1, 0.375, 0.5, 0.875, 1.0])
def test_randomization_closed_form(lam):
    x1, x2 = randomization_exposures(400)
    rep = bias_common(x1, x2, np.full(400, lam), 0.0, 1.0)
    assert rep.total[0] == pytest.approx(2 * lam - 7 / 4, abs=TOL)
    assert bias_common_scalar(scalar_moments(x1, x2, lam), 0.0, 1.0) == pytest.approx(2 * lam - 7 / 4, abs=TOL)


@given(st.integers(0, 2**31), st.floats(-2, 2), st.floats(-2, 2))
def test_scalar_form_equals_matrix_form(seed, beta0, beta1):
    _, X, lam = draw(seed, 2, 20, 1)
    m = scalar_moments(X[0], X[1], lam[:, 0])
    rep = bias_common(X[0], X[1], lam[:, 0], beta0, beta1)
    assert bias_common_scalar(m, beta0, beta1) == pytest.approx(rep.total[0], abs=1e-9 * max(1, abs(rep.total[0])))
    c = scalar_moments(X[0], X[1], 0.3)
    assert bias_common_scalar(m, beta0, beta1, lam=0.3) == pytest.approx(bias_common_scalar(c, beta0, beta1), abs=1e-10)


def test_no_exposure_variation_is_singular():
    x = np.ones(10)
    with pytest.raises(SingularDesignError):
        bias_common(x, x, 0.5, 1.0, 1.0)
    with pytest.raises(SingularDesignError):
        bias_common_scalar(scalar_moments(x, x, 0.5), 1.0, 1.0)


def test_lambda_matrix_shapes():
    assert lambda_matrix(0.3, 2, 3).shape == (2, 3)
    assert np.allclose(lambda_matrix(np.full((3, 3), 1 / 3), 3, 3), 1 / 3)
    with pytest.raises(ConfigError):
        lambda_matrix(0.3, 3, 4)
    with pytest.raises(ConfigError):
        lambda_matrix([0.5, 0.5, 0.0], 3, 4)
    with pytest.raises(ConfigError):
        lambda_matrix(np.full((4, 2), 0.7), 2, 4)
    with pytest.raises(ConfigError):
        bias_device_specific_J(np.ones((2, 3, 1)), 0.5, 0.0, [[1.0], [1.0]], "pooled")


ACTIVITY_CORR = np.array([[0.2057, -0.0439, -0.0128], [-0.0446, 0.1914, -0.0172], [-0.0201, -0.0117, 0.2422]])


def test_diagnostic_flags_dominant_diagonal():
    d = diagnose_matrix(ACTIVITY_CORR)
    assert d.flag
    assert d.diagonal_exceeds_column_sum.all()
    assert d.proportionality > 0.5


def test_diagnostic_proportional_matrix():
    C = np.outer([0.3, 0.2, 0.25], [1.0, 0.8, 1.2])
    d = diagnose_matrix(C)
    assert d.proportionality == pytest.approx(0.0, abs=1e-12)
    assert not d.flag


def sym(seed, n=4000, J=2, k=1):
    rng = np.random.default_rng(seed)
    return rng, rng.poisson(2.0, size=(J, n, k)).astype(float)


def test_stc_satisfied_for_symmetric_design():
    rng, X = sym(0)
    rep = stc_statistics(X, rng.integers(0, 2, X.shape[1]))
    assert rep.satisfied and rep.verdict == "satisfied" and rep.failed == []


@pytest.mark.parametrize("mutate, flag", [
    (lambda X, rng: X * np.array([1.0, 1.5])[:, None, None], "mean"),
    (lambda X, rng: np.stack([X[0], X[0] + rng.integers(0, 2, X[0].shape)]), "independence"),
])
def test_stc_detects_moment_violations(mutate, flag):
    rng, X = sym(1)
    rep = stc_statistics(mutate(X, rng), rng.integers(0, 2, X.shape[1]))
    assert not rep.flags[flag]
    assert flag in rep.failed and rep.verdict == "violated"


def test_stc_detects_second_moment_gap_with_equal_means():
    rng = np.random.default_rng(2)
    X = np.stack([np.full((5000, 1), 2.0) + rng.normal(0, 0.1, (5000, 1)), rng.poisson(2.0, (5000, 1))])
    rep = stc_statistics(X, rng.integers(0, 2, 5000))
    assert rep.flags["mean"] and not rep.flags["second_moment"]


def test_stc_detects_exposure_dependent_preference():
    rng, X = sym(3)
    device = (X[0, :, 0] > X[1, :, 0]).astype(int)
    assert not stc_statistics(X, device).flags["exposure_independent_preference"]


def test_stc_without_assignment_is_violated():
    _, X = sym(4)
    rep = stc_statistics(X)
    assert rep.flags["exposure_independent_preference"] is None
    assert not rep.satisfied


def test_stc_small_sample_gap_is_not_significant():
    # a 10% gap on 30 users is noise, not a violation
    rng = np.random.default_rng(5)
    X = rng.poisson(2.0, size=(2, 30, 1)).astype(float)
    rep = stc_statistics(X, rng.integers(0, 2, 30))
    assert rep.flags["mean"]


def test_check_stc_sources():
    pop = table1_population("b")
    f = fragment(pop, AssignmentMatrix.constant(2, 0, 2))
    assert check_stc(f).lambda_exposure_dependence is not None
    with pytest.raises(ConfigError):
        check_stc(f.without_oracle())
    with pytest.raises(TypeError):
        check_stc(np.zeros(3))


def test_plugin_lambda_and_diagnostic_on_table1():
    f = fragment(table1_population("b"), AssignmentMatrix.constant(2, 0, 2))
    assert plugin_lambda(f) == pytest.approx([1.0, 0.0])
    diags = correlation_diagnostic(f)
    assert len(diags) == 1 and diags[0].matrix.shape == (2, 2)
