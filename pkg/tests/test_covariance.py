"""
Φ 映射、隐函数雅可比、Δ 的雅可比与协方差传播
"""

import math

import numpy as np
import pytest
from scipy import stats

from core import C_LIGHT, SingularCovarianceError
from covariance import (
    delta_jacobians, identification_norm, orbit_covariance, orbit_pair, phi_map, propagate,
    refine_solution, solution_covariance, solution_jacobian,
)
from elements import DeltaPair, mean_motion

MC_GAMMA = np.diag([1e-14, 1e-14, 1e-12, 1e-12])


@pytest.fixture(scope="module")
def truth(mb_pair):
    return np.array([mb_pair.rho1, mb_pair.rho1_dot, mb_pair.rho2, mb_pair.rho2_dot])


@pytest.fixture(scope="module")
def jacobians(mb_pair, truth):
    dR_dA, cond = solution_jacobian(truth, mb_pair.A1, mb_pair.A2)
    dD = delta_jacobians(truth, mb_pair.A1, mb_pair.A2, dR_dA)
    return dR_dA, dD, cond


def _perturbed(pair, k, h):
    """第 k 个分量（0..7，先 𝒜₁ 后 𝒜₂）加 h 后的可归属量对"""
    v = np.concatenate([pair.A1.as_array(), pair.A2.as_array()])
    v[k] += h
    return pair.A1.with_values(v[0:4]), pair.A2.with_values(v[4:8])


def _step(pair, k, rel):
    v = np.concatenate([pair.A1.as_array(), pair.A2.as_array()])
    return rel * max(abs(v[k]), 1e-3)


def test_phi_vanishes_at_truth(mb_pair, truth):
    phi = phi_map(truth, mb_pair.A1, mb_pair.A2)
    assert np.max(np.abs(phi.residual[0:3])) < 1e-14
    assert abs(phi.residual[3]) < 1e-14
    assert phi.jac_R.shape == (4, 4)
    assert phi.jac_A.shape == (4, 8)


def test_phi_jacobian_wrt_R_matches_finite_differences(mb_pair, truth):
    phi = phi_map(truth, mb_pair.A1, mb_pair.A2)
    fd = np.zeros((4, 4))
    for k in range(4):
        h = 1e-6 * max(abs(truth[k]), 1e-3)
        plus, minus = truth.copy(), truth.copy()
        plus[k] += h
        minus[k] -= h
        fd[:, k] = (phi_map(plus, mb_pair.A1, mb_pair.A2).residual
                    - phi_map(minus, mb_pair.A1, mb_pair.A2).residual) / (2 * h)
    np.testing.assert_allclose(phi.jac_R, fd, rtol=1e-4, atol=1e-4 * np.max(np.abs(fd)))


def test_phi_jacobian_wrt_A_matches_finite_differences(mb_pair, truth):
    phi = phi_map(truth, mb_pair.A1, mb_pair.A2)
    fd = np.zeros((4, 8))
    for k in range(8):
        h = _step(mb_pair, k, 1e-6)
        fd[:, k] = (phi_map(truth, *_perturbed(mb_pair, k, h)).residual
                    - phi_map(truth, *_perturbed(mb_pair, k, -h)).residual) / (2 * h)
    np.testing.assert_allclose(phi.jac_A, fd, rtol=1e-4, atol=1e-4 * np.max(np.abs(fd)))


def test_refine_solution_is_fixed_point_at_truth(mb_pair, truth):
    R, converged = refine_solution(truth * (1 + 1e-7), mb_pair.A1, mb_pair.A2)
    assert converged
    np.testing.assert_allclose(R, truth, rtol=1e-10)


def test_solution_jacobian_matches_refined_finite_differences(mb_pair, truth, jacobians):
    dR_dA, _, cond = jacobians
    assert dR_dA.shape == (4, 8)
    assert math.isfinite(cond) and cond >= 1.0
    fd = np.zeros((4, 8))
    for k in range(8):
        h = _step(mb_pair, k, 1e-7)
        Rp, ok_p = refine_solution(truth, *_perturbed(mb_pair, k, h))
        Rm, ok_m = refine_solution(truth, *_perturbed(mb_pair, k, -h))
        assert ok_p and ok_m
        fd[:, k] = (Rp - Rm) / (2 * h)
    err = np.linalg.norm(dR_dA - fd) / np.linalg.norm(fd)
    assert err < 1e-4


def test_delta_jacobian_matches_full_pipeline(mb_pair, truth, jacobians):
    _, dD, _ = jacobians
    fd = np.zeros((2, 8))
    for k in range(8):
        h = _step(mb_pair, k, 1e-6)
        values = []
        for sign in (1, -1):
            A1, A2 = _perturbed(mb_pair, k, sign * h)
            R, ok = refine_solution(truth, A1, A2)
            assert ok
            values.append(orbit_pair(A1, A2, R).delta.as_array())
        fd[:, k] = (values[0] - values[1]) / (2 * h)
    err = np.linalg.norm(dD - fd) / np.linalg.norm(fd)
    assert err < 1e-3


def test_aberration_term_contribution(mb_pair, truth, jacobians):
    dR_dA, dD, _ = jacobians
    without = delta_jacobians(truth, mb_pair.A1, mb_pair.A2, dR_dA, aberration_term=False)
    a = orbit_pair(mb_pair.A1, mb_pair.A2, truth).elements1.a
    expected = mean_motion(a) / C_LIGHT * (dR_dA[0] - dR_dA[2])
    np.testing.assert_allclose(dD[1] - without[1], expected, rtol=1e-6, atol=1e-18)
    np.testing.assert_array_equal(dD[0], without[0])


def test_truth_delta_is_aberration_offset(mb_pair, truth):
    """无光行差的合成数据在 t̃ 历元下只剩 n(ρ₁ − ρ₂)/c 的 Δℓ"""
    pair = orbit_pair(mb_pair.A1, mb_pair.A2, truth)
    n = mean_motion(mb_pair.orbit.a)
    assert abs(pair.delta.d_omega) < 1e-9
    assert pair.delta.d_ell == pytest.approx(n * (mb_pair.rho1 - mb_pair.rho2) / C_LIGHT, abs=1e-9)
    no_ab = orbit_pair(mb_pair.A1, mb_pair.A2, truth, aberration=False)
    assert abs(no_ab.delta.d_ell) < 1e-9
    assert no_ab.t_tilde1 == mb_pair.A1.epoch


def test_identification_norm_examples():
    assert identification_norm(DeltaPair(2.0, 1.0), np.diag([4.0, 1.0])) == pytest.approx(math.sqrt(2.0))
    assert identification_norm((0.0, 0.0), np.diag([1.0, 1.0])) == 0.0
    g = np.array([[2.0, 0.5], [0.5, 1.0]])
    x = np.array([0.3, -0.7])
    assert identification_norm(tuple(x), g) == pytest.approx(math.sqrt(x @ np.linalg.solve(g, x)))


@pytest.mark.parametrize("gamma", [np.zeros((2, 2)), np.array([[1.0, 1.0], [1.0, 1.0]]), np.diag([1.0, -1.0])])
def test_identification_norm_rejects_singular(gamma):
    with pytest.raises(SingularCovarianceError):
        identification_norm(DeltaPair(1e-3, 1e-3), gamma)


def test_propagate_with_zero_covariance(jacobians):
    dR_dA, dD, _ = jacobians
    psi = propagate(np.zeros((4, 4)), np.zeros((4, 4)), dR_dA, dD)
    assert np.all(psi.gamma_psi == 0.0)


def test_propagate_scales_linearly(mb_pair, jacobians):
    dR_dA, dD, _ = jacobians
    g1, g2 = mb_pair.A1.gamma, mb_pair.A2.gamma
    base = propagate(g1, g2, dR_dA, dD)
    double = propagate(2 * g1, 2 * g2, dR_dA, dD)
    np.testing.assert_allclose(double.gamma_R1, 2 * base.gamma_R1, rtol=1e-12)
    np.testing.assert_allclose(double.gamma_delta, 2 * base.gamma_delta, rtol=1e-12)
    np.testing.assert_array_equal(base.gamma_A1, g1)
    np.testing.assert_allclose(base.gamma_psi, base.gamma_psi.T)


def test_gamma_delta_cross_check(mb_pair, jacobians):
    dR_dA, dD, _ = jacobians
    g1, g2 = mb_pair.A1.gamma, mb_pair.A2.gamma
    psi = propagate(g1, g2, dR_dA, dD)
    gamma_A = np.zeros((8, 8))
    gamma_A[0:4, 0:4] = g1
    gamma_A[4:8, 4:8] = g2
    np.testing.assert_allclose(psi.gamma_delta, dD @ gamma_A @ dD.T, rtol=1e-10)
    np.testing.assert_allclose(psi.gamma_R1, dR_dA[0:2] @ gamma_A @ dR_dA[0:2].T, rtol=1e-10)
    block, eigenvalues = orbit_covariance(psi)
    assert block.shape == (6, 6)
    assert eigenvalues.shape == (6,)


def test_solution_covariance_at_truth(mb_pair, truth):
    pair = orbit_pair(mb_pair.A1, mb_pair.A2, truth)
    cov = solution_covariance(truth, mb_pair.A1, mb_pair.A2, pair.delta)
    assert cov.flags == ()
    assert cov.norm is not None and cov.norm < 1.0
    assert cov.psi.gamma_psi.shape == (8, 8)


def test_solution_covariance_flags_singular_gamma(mb_pair, truth):
    A1 = mb_pair.A1.with_values(mb_pair.A1.as_array())
    A1.gamma = np.zeros((4, 4))
    A2 = mb_pair.A2.with_values(mb_pair.A2.as_array())
    A2.gamma = np.zeros((4, 4))
    pair = orbit_pair(A1, A2, truth)
    cov = solution_covariance(truth, A1, A2, pair.delta)
    assert cov.norm is None
    assert "singular covariance" in cov.flags


def test_norm_is_chi_square_with_two_degrees(mb_pair, truth, jacobians):
    """小噪声下 ‖Δ − Δ₀‖★² 服从 χ²(2)"""
    dR_dA, dD, _ = jacobians
    gamma_delta = propagate(MC_GAMMA, MC_GAMMA, dR_dA, dD).gamma_delta
    nominal = orbit_pair(mb_pair.A1, mb_pair.A2, truth).delta.as_array()
    rng = np.random.default_rng(7)
    chol = np.linalg.cholesky(MC_GAMMA)
    samples = []
    for _ in range(500):
        A1 = mb_pair.A1.with_values(mb_pair.A1.as_array() + chol @ rng.standard_normal(4))
        A2 = mb_pair.A2.with_values(mb_pair.A2.as_array() + chol @ rng.standard_normal(4))
        R, ok = refine_solution(truth, A1, A2)
        assert ok
        diff = orbit_pair(A1, A2, R).delta.as_array() - nominal
        samples.append(identification_norm(tuple(diff), gamma_delta) ** 2)
    statistic = stats.kstest(samples, "chi2", args=(2,)).statistic
    assert statistic < 0.15
