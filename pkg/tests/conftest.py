import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("fraglab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fraglab")


def expected_stack_coefficients(design, X, lam, beta0, slopes, common=True):
    """Exact E[beta_hat | X] by linearity of OLS: solve against E[Y~ | X]."""
    J, n, _ = X.shape
    mean_y = beta0 + (X.sum(axis=0) @ slopes[0] if common else np.einsum("jnk,jk->n", X, slopes))
    EY = (lam.T * mean_y[None, :]).reshape(J * n)  # lam is (n, J)
    coef, *_ = np.linalg.lstsq(design, EY, rcond=None)
    return coef


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
