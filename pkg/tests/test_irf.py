import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_data, random_stable_model
from ridgevar.estimators import ls_fit
from ridgevar.inference import standard_cov
from ridgevar.irf import (
    band_halfwidth,
    delta_method_bands,
    impact_jacobian,
    inverse_irf_mapping,
    irf_jacobians,
    ma_coefficients,
    ma_coefficients_companion,
    structural_irf,
)
from ridgevar.var_core import VarModel, benchmark_var2


def test_ma_recursion_base_cases():
    m = benchmark_var2()
    A1, A2 = m.coeffs
    phi = ma_coefficients(m, 2)
    np.testing.assert_array_equal(phi[0], np.eye(2))
    np.testing.assert_array_equal(phi[1], A1)
    np.testing.assert_allclose(phi[2], A1 @ A1 + A2, atol=1e-15)


def test_ma_matches_companion_powers():
    m = benchmark_var2()
    np.testing.assert_allclose(ma_coefficients(m, 24), ma_coefficients_companion(m, 24), atol=1e-12)


def test_structural_irf_impact_examples():
    A = np.array([[[0.5, 0.1], [0.0, 0.4]]])
    eye = structural_irf(VarModel(A, np.eye(2)), 5)
    np.testing.assert_allclose(eye.theta, eye.phi)
    diag = structural_irf(VarModel(A, np.diag([0.3, 5.0])), 0)
    np.testing.assert_allclose(diag.theta[0], np.diag(np.sqrt([0.3, 5.0])))
    S = np.array([[1.0, 0.6], [0.6, 2.0]])
    th0 = structural_irf(VarModel(A, S), 0).theta[0]
    np.testing.assert_allclose(th0 @ th0.T, S, atol=1e-12)
    assert th0[0, 1] == 0 and np.all(np.diag(th0) > 0)


def test_unit_shock_normalization():
    S = np.array([[1.0, 0.6], [0.6, 2.0]])
    th = structural_irf(VarModel(np.zeros((1, 2, 2)), S), 0, unit_shock=True).theta[0]
    np.testing.assert_allclose(np.diag(th), 1.0)


def test_ordering_permutes_consistently(rng):
    m = random_stable_model(rng, 3, 2)
    order = [2, 0, 1]
    res = structural_irf(m, 6, order=order)
    # under the ordering, the first ordered variable is not contemporaneously hit by the others
    assert abs(res.theta[0, 2, 0]) < 1e-14 and abs(res.theta[0, 2, 1]) < 1e-14
    np.testing.assert_allclose(res.phi, ma_coefficients(m, 6), atol=1e-14)
    S = res.theta[0] @ res.theta[0].T
    np.testing.assert_allclose(S, m.sigma_u, atol=1e-12)


def test_band_halfwidth_quantile():
    assert band_halfwidth(1.0, 100, 0.90) == pytest.approx(1.6448536 / 10, rel=1e-6)


def test_horizon_zero_alpha_derivative_is_zero(rng):
    m = random_stable_model(rng, 2, 2)
    d_alpha, d_sigma = irf_jacobians(m.coeffs, m.sigma_u, 3)
    assert np.all(d_alpha[0] == 0)
    assert np.abs(d_sigma[0]).max() > 0


def _fd_jacobians(A, S, H, unit_shock, eps=1e-6):
    K, p = A.shape[1], A.shape[0]
    base_B = np.concatenate(list(A), axis=1)

    def theta(B, S_):
        coeffs = B.reshape(K, p, K).transpose(1, 0, 2)
        return structural_irf(VarModel(coeffs, S_), H, unit_shock=unit_shock).theta.reshape(H + 1, -1, order="F")

    alpha = base_B.reshape(-1, order="F")
    da = np.zeros((H + 1, K * K, alpha.size))
    for j in range(alpha.size):
        e = np.zeros_like(alpha)
        e[j] = eps
        up = theta((alpha + e).reshape(K, -1, order="F"), S)
        dn = theta((alpha - e).reshape(K, -1, order="F"), S)
        da[:, :, j] = (up - dn) / (2 * eps)
    pairs = [(i, j) for j in range(K) for i in range(j, K)]
    ds = np.zeros((H + 1, K * K, len(pairs)))
    for n, (i, j) in enumerate(pairs):
        E = np.zeros((K, K))
        E[i, j] = E[j, i] = eps
        ds[:, :, n] = (theta(base_B, S + E) - theta(base_B, S - E)) / (2 * eps)
    return da, ds


@pytest.mark.parametrize("unit_shock", [False, True])
def test_jacobians_match_finite_differences(rng, unit_shock):
    m = random_stable_model(rng, 2, 2)
    d_alpha, d_sigma = irf_jacobians(m.coeffs, m.sigma_u, 8, unit_shock)
    fa, fs = _fd_jacobians(m.coeffs, m.sigma_u, 8, unit_shock)
    np.testing.assert_allclose(d_alpha, fa, atol=1e-7)
    np.testing.assert_allclose(d_sigma, fs, atol=1e-7)


def test_impact_jacobian_shape():
    assert impact_jacobian(np.eye(3)).shape == (9, 6)


def test_delta_bands_contain_point_and_are_symmetric(rng):
    fit = ls_fit(random_data(rng, 2, 2, 150, intercept=True))
    res = delta_method_bands(fit, standard_cov(fit), 12, 0.9)
    assert np.all(res.lower <= res.theta) and np.all(res.theta <= res.upper)
    # symmetric up to rounding of theta +/- halfwidth
    np.testing.assert_allclose(res.upper - res.theta, res.theta - res.lower, rtol=0, atol=1e-12)
    # impact of shock 2 on variable 1 is zero by construction, and so is its band
    assert res.upper[0, 0, 1] == 0 and res.lower[0, 0, 1] == 0
    rows = res.to_rows()
    assert len(rows) == 4 * 13 and {"response_var", "shock_var", "horizon", "point", "lower", "upper"} <= set(rows[0])


def test_delta_bands_with_order_match_reordered_fit(rng):
    fit = ls_fit(random_data(rng, 3, 1, 200))
    cov = standard_cov(fit)
    res = delta_method_bands(fit, cov, 4, 0.9, order=[1, 2, 0])
    plain = structural_irf(fit, 4, order=[1, 2, 0])
    np.testing.assert_allclose(res.theta, plain.theta, atol=1e-14)
    assert np.all(res.upper >= res.lower)


def test_delta_bands_validate_inputs(rng):
    fit = ls_fit(random_data(rng, 2, 1, 100))
    other = ls_fit(random_data(rng, 2, 2, 100))
    with pytest.raises(ValueError):
        delta_method_bands(fit, standard_cov(other), 4)
    with pytest.raises(ValueError):
        delta_method_bands(fit, standard_cov(fit), 4, level=1.5)


def test_inverse_mapping_closed_forms(rng):
    P1, P2 = rng.normal(size=(2, 2, 2))
    np.testing.assert_allclose(inverse_irf_mapping(P1[None])[0], P1)
    A = inverse_irf_mapping(np.stack([P1, P2]))
    np.testing.assert_allclose(A[0], P1, atol=1e-14)
    np.testing.assert_allclose(A[1], P2 - P1 @ P1, atol=1e-14)


def test_inverse_mapping_benchmark_roundtrip():
    m = benchmark_var2()
    A = inverse_irf_mapping(ma_coefficients(m, 6)[1:])
    np.testing.assert_allclose(A[:2], m.coeffs, atol=1e-10)
    np.testing.assert_allclose(A[2:], 0.0, atol=1e-10)


@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 3), st.integers(0, 10_000))
def test_inverse_mapping_roundtrip_property(K, p, extra, seed):
    m = random_stable_model(np.random.default_rng(seed), K, p)
    H = p + extra
    A = inverse_irf_mapping(ma_coefficients(m, H)[1:])
    np.testing.assert_allclose(A[:p], m.coeffs, atol=1e-9)
    np.testing.assert_allclose(A[p:], 0.0, atol=1e-9)
