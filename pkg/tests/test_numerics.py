import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgeform.numerics import (
    SigmaNormParams,
    finite_diff_jacobian,
    gradient_correction_matrix,
    sigma_gradient,
    sigma_norm,
)

vectors = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=4).map(np.array)
epsilons = st.floats(1e-4, 2.0)


def test_sigma_norm_values():
    assert sigma_norm(np.zeros(3), 0.3) == 0.0
    assert sigma_norm([3.0, 4.0], 0.1) == pytest.approx((np.sqrt(3.5) - 1) / 0.1, rel=1e-14)
    assert sigma_norm([3.0, 4.0], 0.1) == pytest.approx(8.70829, abs=5e-6)


def test_sigma_norm_small_epsilon_limit():
    y = np.array([0.7, -1.3, 2.0])
    assert sigma_norm(y, 1e-6) == pytest.approx(0.5 * y @ y, rel=1e-4)


def test_sigma_gradient_values():
    np.testing.assert_allclose(sigma_gradient([3.0, 4.0], 0.1), [1.60357, 2.13809], atol=5e-6)
    np.testing.assert_array_equal(sigma_gradient(np.zeros(2)), np.zeros(2))


def test_invalid_epsilon():
    with pytest.raises(ValueError):
        SigmaNormParams(0.0)
    with pytest.raises(ValueError):
        sigma_norm([1.0], -1.0)


@settings(max_examples=200, deadline=None)
@given(vectors, epsilons)
def test_squared_norm_identity(y, eps):
    s = sigma_norm(y, eps)
    sq = float(y @ y)
    assert s * (2 + eps * s) == pytest.approx(sq, rel=1e-12, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(vectors, epsilons)
def test_gradient_forms_agree(y, eps):
    alt = y / (1 + eps * sigma_norm(y, eps))
    np.testing.assert_allclose(sigma_gradient(y, eps), alt, rtol=1e-12, atol=1e-300)


@settings(max_examples=100, deadline=None)
@given(vectors, epsilons)
def test_gradient_shorter_than_argument(y, eps):
    # below eps*|y|^2 ~ 1e-14 the shrink factor rounds to 1
    if eps * float(y @ y) > 1e-12:
        assert np.linalg.norm(sigma_gradient(y, eps)) < np.linalg.norm(y)


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(1.0001, 10.0), epsilons)
def test_monotone_in_norm(y, scale, eps):
    if np.linalg.norm(y) > 1e-6:
        assert sigma_norm(y, eps) < sigma_norm(scale * y, eps)


def test_gradient_matches_finite_difference(rng):
    for _ in range(20):
        y = rng.normal(scale=3, size=3)
        fd = finite_diff_jacobian(lambda v: sigma_norm(v, 0.1), y, step=1e-5)
        np.testing.assert_allclose(sigma_gradient(y, 0.1), fd, rtol=1e-6)


def test_jacobian_identity_and_cubic():
    x = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(finite_diff_jacobian(lambda v: v, x), np.eye(3), atol=1e-10)
    x = np.array([1.0, 0.0])
    jac = finite_diff_jacobian(lambda v: (v @ v) * v, x)
    np.testing.assert_allclose(jac, 2 * np.outer(x, x) + (x @ x) * np.eye(2), atol=1e-6)


def test_hessian_symmetry(rng):
    y = rng.normal(size=4)
    H = finite_diff_jacobian(lambda v: sigma_gradient(v, 0.1), y)
    assert np.max(np.abs(H - H.T)) < 1e-6


def test_jacobian_reports_nonfinite_coordinate():
    def f(v):
        return np.array([1.0 / v[1]]) if v[1] > 0 else np.array([np.inf])

    with pytest.raises(FloatingPointError, match=r"\(1,\)"):
        finite_diff_jacobian(f, np.array([1.0, 1e-7]))


def test_correction_matrix_reproduces_vector(rng):
    g, x = rng.normal(size=5), rng.normal(size=5)
    C = gradient_correction_matrix(g, x)
    np.testing.assert_allclose(C @ x, g, atol=1e-12)
    np.testing.assert_array_equal(C, C.T)
    assert np.all(gradient_correction_matrix(g, np.zeros(5)) == 0)
