"""
DFT、同时迭代求根、Sylvester 结式与两种求解引擎
"""

import cmath

import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from core import ZeroResultantError, get_arithmetic
from integrals import BivariatePoly, BivariateSystem, ConicQ, build_p, compute_coeffs
from polysolve import (
    UnivariatePoly, dft_evaluate, find_roots, idft_interpolate, is_real_positive, lu_determinant,
    normal_form_transform, polish_pair, resultant_rho1, solve_system_dft, solve_system_normal_form,
    sylvester_matrix,
)

from tests.oracles import brute_force_roots

EXT = get_arithmetic("extended", 128)
NF = get_arithmetic("extended", 256)
STD = get_arithmetic("standard")


@pytest.fixture(scope="module")
def coeffs(mb_pair):
    return compute_coeffs(mb_pair.A1), compute_coeffs(mb_pair.A2)


@pytest.fixture(scope="module")
def system(coeffs):
    return build_p(*coeffs, arith=EXT)


@pytest.fixture(scope="module")
def dft_result(system):
    return solve_system_dft(system)


def _closest(candidates, rho1, rho2):
    return min(candidates, key=lambda c: abs(c.rho1 - rho1) + abs(c.rho2 - rho2))


# ---------------------------------------------------------------------------
# DFT
# ---------------------------------------------------------------------------

def test_dft_of_constant_and_identity():
    ones = dft_evaluate([1.0], STD, 8)
    np.testing.assert_allclose(np.array(ones, dtype=complex), np.ones(8))
    nodes = dft_evaluate([0.0, 1.0], STD, 8)
    expected = [cmath.exp(2j * cmath.pi * k / 8) for k in range(8)]
    np.testing.assert_allclose(np.array(nodes, dtype=complex), expected, atol=1e-15)


def test_idft_recovers_coefficients_extended():
    coeffs = [3, -1, 0.5, 0, 2]
    poly = idft_interpolate(dft_evaluate(coeffs, EXT), EXT)
    for got, want in zip(poly.coeffs, coeffs + [0] * 59):
        assert abs(got - want) < 1e-35


def test_dft_rejects_high_degree():
    with pytest.raises(ValueError):
        dft_evaluate([1.0] * 65, STD, 64)


# ---------------------------------------------------------------------------
# 求根
# ---------------------------------------------------------------------------

def test_find_roots_quadratic():
    roots = find_roots(UnivariatePoly([-1.0, 0.0, 1.0], STD))
    np.testing.assert_allclose(sorted(roots.values().real), [-1.0, 1.0], atol=1e-14)
    assert roots.converged


def test_find_roots_zero_roots_split_off():
    roots = find_roots(UnivariatePoly([0.0, 0.0, -4.0, 1.0], STD))
    np.testing.assert_allclose(sorted(roots.values().real), [0.0, 0.0, 4.0], atol=1e-14)


def test_find_roots_wilkinson_extended():
    coeffs = [EXT.complex(float(c)) for c in P.polyfromroots(range(1, 11))]
    roots = find_roots(UnivariatePoly(coeffs, EXT))
    got = sorted(roots.roots, key=lambda r: complex(r.value).real)
    for k, root in enumerate(got, start=1):
        assert abs(root.value - k) < 1e-20
        assert root.error_bound < 1e-20


def test_find_roots_convergence_needs_both_stages():
    coeffs = [EXT.complex(float(c)) for c in P.polyfromroots(range(1, 11))]
    poly = UnivariatePoly(coeffs, EXT)
    assert find_roots(poly).converged

    # 双精度阶段只迭代一次，扩展精度阶段仍能把根修正到位，但整体不算收敛
    rushed = find_roots(poly, max_iter=1)
    assert not rushed.converged
    got = sorted(rushed.roots, key=lambda r: complex(r.value).real)
    for k, root in enumerate(got, start=1):
        assert abs(root.value - k) < 1e-20

    assert not find_roots(poly, polish_iter=0).converged


def test_find_roots_error_bounds_cover_truth():
    rng = np.random.default_rng(3)
    truth = rng.uniform(-3, 3, 12) + 1j * rng.uniform(-3, 3, 12)
    roots = find_roots(UnivariatePoly(list(P.polyfromroots(truth)), STD))
    for z in truth:
        closest = min(roots.roots, key=lambda r: abs(r.complex - z))
        assert abs(closest.complex - z) <= max(closest.error_bound, 1e-12)


def test_find_roots_rejects_constant():
    with pytest.raises(ValueError):
        find_roots(UnivariatePoly([2.0], STD))


def test_is_real_positive():
    assert is_real_positive(1.5 + 1e-12j, 1e-4, 1e-9)
    assert not is_real_positive(1.5 + 1e-6j, 1e-4, 1e-9)
    assert not is_real_positive(-0.3, 1e-4, 1e-9)
    assert not is_real_positive(5e-5, 1e-4, 1e-9)


# ---------------------------------------------------------------------------
# 结式
# ---------------------------------------------------------------------------

def test_sylvester_determinant_of_linear_pair():
    S = sylvester_matrix([-2.0, 1.0], [-3.0, 1.0], STD)
    det, _ = lu_determinant(S)
    assert abs(det) == pytest.approx(1.0)


def test_lu_determinant_matches_numpy():
    rng = np.random.default_rng(11)
    M = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    det, growth = lu_determinant(M)
    assert det == pytest.approx(np.linalg.det(M), rel=1e-12)
    assert growth >= 1.0


def _toy_system(arith):
    """p = ρ₁ − ρ₂，q = ρ₁ − 2：唯一解 (2, 2)"""
    p = BivariatePoly(arith.array([[0, -1], [1, 0]]), arith)
    conic = ConicQ(arith.real(0), arith.real(1), arith.real(0), arith.real(0), arith.real(-2))
    return BivariateSystem(conic=conic, p=p, delta=arith.real(1), N1=None, N2=None, arith=arith)


def test_resultant_of_toy_system():
    info = resultant_rho1(_toy_system(EXT))
    assert info.poly.degree == 1
    roots = find_roots(info.poly)
    assert abs(roots.roots[0].value - 2) < 1e-30


def test_resultant_detects_common_component():
    arith = EXT
    # p = (ρ₁ − 2)·ρ₂ 与 q = ρ₁ − 2 有公共因子
    p = BivariatePoly(arith.array([[0, -2], [0, 1]]), arith)
    conic = ConicQ(arith.real(0), arith.real(1), arith.real(0), arith.real(0), arith.real(-2))
    system = BivariateSystem(conic=conic, p=p, delta=arith.real(1), N1=None, N2=None, arith=arith)
    with pytest.raises(ZeroResultantError):
        resultant_rho1(system)


def test_resultant_degree_at_most_48(system):
    info = resultant_rho1(system)
    assert info.poly.degree <= 48
    assert info.formal_degree == 20
    assert info.conic_degree == 2
    assert info.tail < 1e-20


# ---------------------------------------------------------------------------
# 求解引擎
# ---------------------------------------------------------------------------

def test_dft_engine_finds_truth(mb_pair, dft_result):
    best = _closest(dft_result.candidates, mb_pair.rho1, mb_pair.rho2)
    assert best.rho1 == pytest.approx(mb_pair.rho1, abs=1e-8)
    assert best.rho2 == pytest.approx(mb_pair.rho2, abs=1e-8)
    assert best.polished
    assert best.engine == "dft"
    assert dft_result.diagnostics["eliminate"] == "rho1"


def test_dft_engine_covers_brute_force_roots(mb_pair, coeffs, dft_result):
    oracle = brute_force_roots(*coeffs)
    assert any(abs(a - mb_pair.rho1) < 1e-6 and abs(b - mb_pair.rho2) < 1e-6 for a, b in oracle)
    for rho1, rho2 in oracle:
        best = _closest(dft_result.candidates, rho1, rho2)
        assert abs(best.rho1 - rho1) < 1e-6 and abs(best.rho2 - rho2) < 1e-6


def test_dft_candidates_satisfy_both_equations(dft_result):
    for cand in dft_result.candidates:
        assert cand.rho1 > 0 and cand.rho2 > 0
        if cand.polished:
            assert cand.q_residual < 1e-20
            assert cand.p_residual < 1e-20


def test_eliminating_rho2_gives_same_solutions(system, dft_result):
    other = solve_system_dft(system, eliminate="rho2")
    for cand in dft_result.candidates:
        match = _closest(other.candidates, cand.rho1, cand.rho2)
        assert abs(match.rho1 - cand.rho1) < 1e-6 and abs(match.rho2 - cand.rho2) < 1e-6


def test_polish_pair_returns_to_root(mb_pair, system):
    x, y, ok = polish_pair(system, mb_pair.rho1 + 1e-7, mb_pair.rho2 - 1e-7)
    assert ok
    assert abs(float(x) - mb_pair.rho1) < 1e-10
    assert abs(float(y) - mb_pair.rho2) < 1e-10


@pytest.fixture(scope="module")
def nf_system(coeffs):
    return build_p(*coeffs, arith=NF)


@pytest.fixture(scope="module")
def nf_result(nf_system):
    return solve_system_normal_form(nf_system, arith=NF)


def test_normal_form_transform_identity(nf_system):
    T = normal_form_transform(nf_system.conic, NF)
    q20 = nf_system.conic.q20
    for xi1, xi2 in ((0.3 + 0.1j, -1.2 + 0.4j), (2.0, 0.5), (-0.7j, 1.1)):
        x1, x2 = NF.complex(xi1), NF.complex(xi2)
        r1, r2 = T.to_rho(x1, x2)
        q = nf_system.conic.evaluate(r1, r2)
        expected = 2 * q20 * T.sigma1 ** 2 * (x1 * x2 - T.c_star)
        scale = abs(2 * q20 * T.sigma1 ** 2) * (abs(x1 * x2) + abs(T.c_star)) + nf_system.conic.scale(r1, r2)
        assert abs(q - expected) < 1e-30 * scale
        back = T.to_xi(r1, r2)
        assert abs(back[0] - x1) + abs(back[1] - x2) < 1e-30 * (1 + abs(x1) + abs(x2))


def test_normal_form_engine_finds_truth(mb_pair, nf_result):
    best = _closest(nf_result.candidates, mb_pair.rho1, mb_pair.rho2)
    assert best.rho1 == pytest.approx(mb_pair.rho1, abs=1e-6)
    assert best.rho2 == pytest.approx(mb_pair.rho2, abs=1e-6)
    assert best.engine == "normal_form"
    assert "c_star" in nf_result.diagnostics
    # 缺省的 σ₂ 把 c★ 归一到单位模
    assert abs(nf_result.diagnostics["c_star"]) == pytest.approx(1.0, rel=1e-12)


def test_normal_form_engine_agrees_with_dft(nf_result, dft_result):
    for cand in dft_result.candidates:
        match = _closest(nf_result.candidates, cand.rho1, cand.rho2)
        assert abs(match.rho1 - cand.rho1) < 1e-6 and abs(match.rho2 - cand.rho2) < 1e-6


def test_normal_form_independent_of_scale_choice(nf_system, nf_result):
    other = solve_system_normal_form(nf_system, arith=NF, sigma2=2)
    assert len(other.candidates) == len(nf_result.candidates)
    for cand in nf_result.candidates:
        match = _closest(other.candidates, cand.rho1, cand.rho2)
        assert abs(match.rho1 - cand.rho1) < 1e-10 and abs(match.rho2 - cand.rho2) < 1e-10
