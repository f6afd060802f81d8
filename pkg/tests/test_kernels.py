import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpsim.kernels import (
    ETA_FLOOR,
    KernelSpec,
    SingularMatrixError,
    anisotropic_corr,
    build_corr_matrix,
    cholesky_with_jitter,
    corr,
    cross_corr,
    cross_corr_matrix,
    sim_corr,
)

BETA = np.array([2.85, 0.70, 0.99, -0.78])

unit = st.floats(0.0, 1.0, allow_nan=False)
coef = st.floats(-3.0, 3.0, allow_nan=False)


def designs(n_max=6, p=3):
    return st.integers(1, n_max).flatmap(lambda n: arrays(float, (n, p), elements=unit))


# -- pointwise correlations --------------------------------------------------


def test_sim_corr_hand_value():
    xi = np.array([1.0, 0, 0, 0])
    assert sim_corr(xi, np.zeros(4), BETA) == pytest.approx(np.exp(-2.85**2), rel=1e-12)
    assert sim_corr(xi, np.zeros(4), BETA) == pytest.approx(2.968e-4, rel=1e-3)


def test_sim_corr_degenerate_cases(rng):
    x, y = rng.uniform(size=(2, 4))
    assert sim_corr(x, x, BETA) == 1.0
    assert sim_corr(x, y, np.zeros(4)) == 1.0


def test_sim_corr_dimension_mismatch():
    with pytest.raises(ValueError):
        sim_corr(np.zeros(3), np.zeros(4), BETA)


def test_anisotropic_hand_value():
    assert anisotropic_corr([1.0, 1.0], [0.0, 0.0], [1.0, 1.0]) == pytest.approx(np.exp(-2.0))
    assert anisotropic_corr([0.3, 0.2], [0.3, 0.2], [0.5, 2.0]) == 1.0


def test_anisotropic_flat_limit():
    assert anisotropic_corr([1.0, 0.0], [0.0, 1.0], [1e12, 1e12]) == pytest.approx(1.0, abs=1e-9)


def test_anisotropic_rejects_nonpositive_theta():
    with pytest.raises(ValueError):
        anisotropic_corr([1.0], [0.0], [0.0])
    with pytest.raises(ValueError):
        KernelSpec.separable([1.0, -1.0])


@given(arrays(float, 3, elements=unit), arrays(float, 3, elements=unit), arrays(float, 3, elements=coef))
def test_sim_corr_sign_symmetric(x, y, b):
    assert sim_corr(x, y, b) == sim_corr(x, y, -b)
    assert sim_corr(x, y, b) == sim_corr(y, x, b)


@given(designs(), arrays(float, 3, elements=coef))
def test_sim_equals_one_dimensional_projection(X, b):
    # rank-1 kernel is the unit length-scale Gaussian on the projected inputs
    K = corr(X, X, KernelSpec.sim(b))
    t = (X @ b)[:, None]
    K1 = corr(t, t, KernelSpec.separable([1.0]))
    np.testing.assert_allclose(K, K1, rtol=1e-12, atol=1e-14)


def test_sim_collinear_product_structure(rng):
    # for indices t1 < t2 < t3, k13 = k12 * k23 * exp(-2 (t2 - t1)(t3 - t2))
    b = rng.normal(size=3)
    X = rng.uniform(size=(3, 3))
    t = X @ b
    K = corr(X, X, KernelSpec.sim(b))
    d12, d23 = t[1] - t[0], t[2] - t[1]
    assert K[0, 2] == pytest.approx(K[0, 1] * K[1, 2] * np.exp(-2 * d12 * d23), rel=1e-10)


def test_isotropic_is_separable_with_equal_theta(rng):
    X = rng.uniform(size=(5, 3))
    a = corr(X, X, KernelSpec.isotropic(0.4))
    b = corr(X, X, KernelSpec.separable([0.4, 0.4, 0.4]))
    np.testing.assert_allclose(a, b, rtol=1e-14)


# -- KernelSpec validation ----------------------------------------------------


def test_spec_nugget_floor():
    with pytest.raises(ValueError):
        KernelSpec.sim([1.0], eta=1e-9)
    KernelSpec.sim([0.0, 0.0], eta=ETA_FLOOR)


def test_spec_is_immutable():
    s = KernelSpec.sim([1.0, 2.0], 0.1)
    with pytest.raises(ValueError):
        s.params[0] = 3.0


def test_spec_dimension_check():
    with pytest.raises(ValueError):
        build_corr_matrix(np.zeros((3, 2)), KernelSpec.sim([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        KernelSpec("isotropic", [1.0, 2.0])


# -- correlation matrices ----------------------------------------------------


def test_single_point_matrix():
    K = build_corr_matrix(np.array([[0.2, 0.4]]), KernelSpec.sim([1.0, 1.0], 0.3))
    assert K.entries.shape == (1, 1)
    assert K.entries[0, 0] == pytest.approx(1.3)
    assert K.logdet == pytest.approx(np.log(1.3))


def test_duplicate_rows_need_the_nugget():
    X = np.array([[0.5, 0.5], [0.5, 0.5]])
    K = build_corr_matrix(X, KernelSpec.sim([1.0, -2.0], 0.05))
    assert K.entries[0, 1] == 1.0
    np.testing.assert_allclose(np.diag(K.entries), 1.05)
    assert K.jitter == 0.0


def test_separable_matrix_matches_entrywise():
    X = np.array([[0.1, 0.2], [0.7, 0.4], [0.3, 0.9]])
    spec = KernelSpec.separable([1.0, 1.0], 0.1)
    K = build_corr_matrix(X, spec).entries
    for i in range(3):
        for j in range(3):
            want = np.exp(-np.sum((X[i] - X[j]) ** 2)) + 0.1 * (i == j)
            assert abs(K[i, j] - want) < 1e-12


def test_matrix_warns_outside_unit_cube():
    with pytest.warns(UserWarning, match="unit cube"):
        build_corr_matrix(np.array([[0.0, 1.5], [0.2, 0.1]]), KernelSpec.sim([1.0, 1.0], 0.1))


@settings(max_examples=50, deadline=None)
@given(designs(), arrays(float, 3, elements=coef), st.floats(1e-6, 1.0))
def test_matrix_symmetric_and_factorised(X, b, eta):
    K = build_corr_matrix(X, KernelSpec.sim(b, eta))
    np.testing.assert_array_equal(K.entries, K.entries.T)
    R = K.chol @ K.chol.T
    assert np.linalg.norm(R - K.entries) <= 1e-10 * np.linalg.norm(K.entries)
    assert K.logdet == pytest.approx(np.linalg.slogdet(K.entries)[1], abs=1e-8)


def test_jitter_escalation():
    M = np.ones((3, 3))
    L, jitter = cholesky_with_jitter(M)
    assert 1e-10 <= jitter <= 1e-6
    np.testing.assert_allclose(L @ L.T, M + jitter * np.eye(3), atol=1e-12)
    with pytest.raises(SingularMatrixError):
        cholesky_with_jitter(-np.eye(2))


def test_singular_error_names_spec(monkeypatch):
    from gpsim import kernels

    def refuse(*a, **k):
        raise kernels.linalg.LinAlgError("not PD")

    monkeypatch.setattr(kernels.linalg, "cholesky", refuse)
    with pytest.raises(SingularMatrixError, match="separable.*eta=0.1"):
        build_corr_matrix(np.eye(2), KernelSpec.separable([1.0, 1.0], 0.1))


# -- cross correlations ------------------------------------------------------


def test_cross_corr_nugget_only_on_exact_match(rng):
    X = rng.uniform(size=(4, 2))
    spec = KernelSpec.sim([1.0, 2.0], 0.2)
    k = cross_corr(X[1], X, spec)
    assert k[1] == pytest.approx(1.2)
    k2 = cross_corr(X[1] + 1e-12, X, spec)
    assert k2[1] == pytest.approx(1.0)
    k0 = cross_corr_matrix(X[1:2], X, spec, nugget=False)
    assert k0[0, 1] == 1.0


def test_cross_corr_zero_beta_and_entrywise(rng):
    X = rng.uniform(size=(5, 3))
    x = rng.uniform(size=3)
    np.testing.assert_array_equal(cross_corr(x, X, KernelSpec.sim(np.zeros(3), 0.1)), 1.0)
    theta = np.array([0.3, 0.5, 2.0])
    k = cross_corr(x, X, KernelSpec.separable(theta, 0.1))
    want = [anisotropic_corr(x, xi, theta) for xi in X]
    np.testing.assert_allclose(k, want, rtol=1e-14)


def test_cross_corr_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        cross_corr(np.zeros(2), rng.uniform(size=(3, 3)), KernelSpec.sim([1.0, 1.0, 1.0]))
