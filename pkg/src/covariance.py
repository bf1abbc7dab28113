"""
协方差模块
Φ 映射、隐函数雅可比、相容性条件 Δ 的雅可比、协方差传播与识别范数
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

try:
    from .attributable import Attributable
    from .core import (
        C_LIGHT, MU_SUN, SingularCovarianceError, angle_diff_smooth,
    )
    from .elements import (
        AttributableElements, DeltaPair, KeplerianElements, attributable_jacobian,
        attributable_to_cartesian, attributable_to_keplerian, compatibility_delta, mean_motion,
    )
except ImportError:
    from attributable import Attributable
    from core import (
        C_LIGHT, MU_SUN, SingularCovarianceError, angle_diff_smooth,
    )
    from elements import (
        AttributableElements, DeltaPair, KeplerianElements, attributable_jacobian,
        attributable_to_cartesian, attributable_to_keplerian, compatibility_delta, mean_motion,
    )

logger = logging.getLogger(__name__)

# 根数偏导数的中心差分步长（各坐标自身单位）
ELEMENT_FD_STEP = 1e-7
# ∂Φ/∂R 条件数上限
PHI_COND_MAX = 1e14
# Γ_Δ 行列式相对阈值
GAMMA_DELTA_DET_TOL = 1e-30


@dataclass(frozen=True)
class PhiMap:
    """Φ(R; A) = (c₁ − c₂, ℰ₁ − ℰ₂) 及其对 R = (ρ₁, ρ̇₁, ρ₂, ρ̇₂) 和 A = (𝒜₁, 𝒜₂) 的雅可比"""

    residual: np.ndarray
    jac_R: np.ndarray
    jac_A: np.ndarray


@dataclass(frozen=True)
class PsiCovariance:
    """
    Ψ(A) = (𝒜₁, ℛ₁, Δ₁,₂) 的 8×8 协方差

    下标次序 (α, δ, α̇, δ̇, ρ, ρ̇, Δω, Δℓ)，对应 t̃₁ 时刻。
    """

    gamma_psi: np.ndarray
    jacobian: np.ndarray = field(repr=False)

    @property
    def gamma_A1(self) -> np.ndarray:
        return self.gamma_psi[0:4, 0:4]

    @property
    def gamma_A1_R1(self) -> np.ndarray:
        return self.gamma_psi[0:4, 4:6]

    @property
    def gamma_A1_delta(self) -> np.ndarray:
        return self.gamma_psi[0:4, 6:8]

    @property
    def gamma_R1(self) -> np.ndarray:
        return self.gamma_psi[4:6, 4:6]

    @property
    def gamma_R1_delta(self) -> np.ndarray:
        return self.gamma_psi[4:6, 6:8]

    @property
    def gamma_delta(self) -> np.ndarray:
        return self.gamma_psi[6:8, 6:8]


@dataclass(frozen=True)
class OrbitPair:
    """两个时刻的轨道根数及光行差修正后的历元"""

    elements1: KeplerianElements
    elements2: KeplerianElements
    t_tilde1: float
    t_tilde2: float
    delta: DeltaPair


def _state(A: Attributable, rho: float, rho_dot: float) -> AttributableElements:
    return AttributableElements(A.alpha, A.delta, A.alpha_dot, A.delta_dot, float(rho), float(rho_dot), A.epoch)


def aberration_epoch(A: Attributable, rho: float) -> float:
    """t̃ = t̄ − ρ/c"""
    return A.epoch - rho / C_LIGHT


def orbit_pair(A1: Attributable, A2: Attributable, R: Sequence[float], aberration: bool = True,
               tol: float = 1e-8) -> OrbitPair:
    """
    由 R = (ρ₁, ρ̇₁, ρ₂, ρ̇₂) 组装两个时刻的黄道根数和 Δ₁,₂

    Raises:
        HyperbolicOrbitError: 能量非负
        NumericalFaultError: 两组根数的 (a, e, I, Ω) 不一致
    """
    rho1, rho1_dot, rho2, rho2_dot = (float(x) for x in R)
    t1 = aberration_epoch(A1, rho1) if aberration else A1.epoch
    t2 = aberration_epoch(A2, rho2) if aberration else A2.epoch
    k1 = attributable_to_keplerian(_state(A1, rho1, rho1_dot), A1.q_obs, A1.q_dot_obs, epoch=t1)
    k2 = attributable_to_keplerian(_state(A2, rho2, rho2_dot), A2.q_obs, A2.q_dot_obs, epoch=t2)
    delta = compatibility_delta(k1, k2, t1, t2, tol=tol)
    return OrbitPair(k1, k2, t1, t2, delta)


def _integrals_jacobian(r: np.ndarray, r_dot: np.ndarray) -> np.ndarray:
    """∂(c, ℰ)/∂(r, ṙ)，4×6"""
    rn = float(np.linalg.norm(r))
    K = np.zeros((4, 6))
    # c = r × ṙ
    K[0:3, 0:3] = -_skew(r_dot)
    K[0:3, 3:6] = _skew(r)
    K[3, 0:3] = MU_SUN * r / rn ** 3
    K[3, 3:6] = r_dot
    return K


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _integrals(ae: AttributableElements, A: Attributable):
    r, r_dot = attributable_to_cartesian(ae, A.q_obs, A.q_dot_obs)
    c = np.cross(r, r_dot)
    energy = 0.5 * float(r_dot @ r_dot) - MU_SUN / float(np.linalg.norm(r))
    return np.append(c, energy), _integrals_jacobian(r, r_dot) @ attributable_jacobian(ae)


def phi_map(R: Sequence[float], A1: Attributable, A2: Attributable) -> PhiMap:
    """
    Φ 及其解析雅可比

    ∂(c, ℰ)/∂(r, ṙ) 乘以可归属根数到笛卡尔坐标的雅可比；观测者状态视为常量。
    """
    rho1, rho1_dot, rho2, rho2_dot = (float(x) for x in R)
    v1, M1 = _integrals(_state(A1, rho1, rho1_dot), A1)
    v2, M2 = _integrals(_state(A2, rho2, rho2_dot), A2)
    jac_R = np.hstack([M1[:, 4:6], -M2[:, 4:6]])
    jac_A = np.hstack([M1[:, 0:4], -M2[:, 0:4]])
    return PhiMap(v1 - v2, jac_R, jac_A)


def solution_jacobian(R: Sequence[float], A1: Attributable, A2: Attributable) -> Tuple[np.ndarray, float]:
    """
    ∂R/∂A = −[∂Φ/∂R]⁻¹ ∂Φ/∂A

    Returns:
        (dR_dA 4×8, ∂Φ/∂R 的条件数)

    Raises:
        SingularCovarianceError: ∂Φ/∂R 奇异
    """
    phi = phi_map(R, A1, A2)
    cond = float(np.linalg.cond(phi.jac_R))
    if not math.isfinite(cond) or cond > PHI_COND_MAX:
        raise SingularCovarianceError(f"dPhi/dR is singular (cond={cond:.3e})")
    dR_dA = -np.linalg.solve(phi.jac_R, phi.jac_A)
    return dR_dA, cond


def refine_solution(R0: Sequence[float], A1: Attributable, A2: Attributable,
                    max_iter: int = 20, tol: float = 1e-14) -> Tuple[np.ndarray, bool]:
    """
    在 Φ(R; A) = 0 上做牛顿迭代

    Returns:
        (R, converged)
    """
    R = np.asarray(R0, dtype=float).copy()
    for _ in range(max_iter):
        phi = phi_map(R, A1, A2)
        try:
            step = np.linalg.solve(phi.jac_R, -phi.residual)
        except np.linalg.LinAlgError:
            return R, False
        R = R + step
        if float(np.max(np.abs(step))) <= tol * (1.0 + float(np.max(np.abs(R)))):
            return R, True
    return R, False


def _element_partials(A: Attributable, rho: float, rho_dot: float, step: float = ELEMENT_FD_STEP) -> np.ndarray:
    """
    ∂(a, ω, ℓ)/∂(α, δ, α̇, δ̇, ρ, ρ̇)，中心差分，3×6

    角度差按平滑方式取，跨越 0/2π 时不跳变。
    """
    base = _state(A, rho, rho_dot).as_array()
    out = np.zeros((3, 6))
    for j in range(6):
        plus, minus = base.copy(), base.copy()
        plus[j] += step
        minus[j] -= step
        kp = attributable_to_keplerian(AttributableElements.from_array(plus, A.epoch), A.q_obs, A.q_dot_obs)
        km = attributable_to_keplerian(AttributableElements.from_array(minus, A.epoch), A.q_obs, A.q_dot_obs)
        out[0, j] = (kp.a - km.a) / (2 * step)
        out[1, j] = angle_diff_smooth(kp.omega, km.omega) / (2 * step)
        out[2, j] = angle_diff_smooth(kp.ell, km.ell) / (2 * step)
    return out


def delta_jacobians(R: Sequence[float], A1: Attributable, A2: Attributable, dR_dA: np.ndarray,
                    mean_motion_term: bool = True, aberration_term: bool = True) -> np.ndarray:
    """
    dΔ/dA，2×8

    链式法则：∂(ω, ℓ)/∂(𝒜ᵢ, ℛᵢ) 与 dℛᵢ/dA 组合；Δℓ 另含
    (3/2)(n/a)(t̃₁ − t̃₂) da 的平均运动项和 (n/c)(dρ₁ − dρ₂) 的光行差项。

    Args:
        R: (ρ₁, ρ̇₁, ρ₂, ρ̇₂)
        dR_dA: solution_jacobian 的结果
        mean_motion_term, aberration_term: 关闭对应修正项（用于验证）
    """
    rho1, rho1_dot, rho2, rho2_dot = (float(x) for x in R)
    G1 = _element_partials(A1, rho1, rho1_dot)
    G2 = _element_partials(A2, rho2, rho2_dot)

    sel1 = np.hstack([np.eye(4), np.zeros((4, 4))])
    sel2 = np.hstack([np.zeros((4, 4)), np.eye(4)])
    d1 = G1[:, 0:4] @ sel1 + G1[:, 4:6] @ dR_dA[0:2]
    d2 = G2[:, 0:4] @ sel2 + G2[:, 4:6] @ dR_dA[2:4]

    out = np.zeros((2, 8))
    out[0] = d1[1] - d2[1]
    out[1] = d1[2] - d2[2]

    a = attributable_to_keplerian(_state(A1, rho1, rho1_dot), A1.q_obs, A1.q_dot_obs).a
    n = mean_motion(a)
    if mean_motion_term:
        dt = aberration_epoch(A1, rho1) - aberration_epoch(A2, rho2)
        out[1] += 1.5 * (n / a) * dt * d1[0]
    if aberration_term:
        out[1] += (n / C_LIGHT) * (dR_dA[0] - dR_dA[2])
    return out


def propagate(gamma_A1: np.ndarray, gamma_A2: np.ndarray, dR_dA: np.ndarray,
              dDelta_dA: np.ndarray) -> PsiCovariance:
    """Γ_Ψ = (∂Ψ/∂A) Γ_A (∂Ψ/∂A)ᵀ，Γ_A = diag(Γ_𝒜₁, Γ_𝒜₂)"""
    gamma_A = np.zeros((8, 8))
    gamma_A[0:4, 0:4] = gamma_A1
    gamma_A[4:8, 4:8] = gamma_A2
    M = np.zeros((8, 8))
    M[0:4, 0:4] = np.eye(4)
    M[4:6] = dR_dA[0:2]
    M[6:8] = dDelta_dA
    gamma_psi = M @ gamma_A @ M.T
    gamma_psi = 0.5 * (gamma_psi + gamma_psi.T)
    # 恒等块原样保留
    gamma_psi[0:4, 0:4] = gamma_A1
    return PsiCovariance(gamma_psi, M)


def identification_norm(delta: DeltaPair, gamma_delta: np.ndarray) -> float:
    """
    ‖Δ‖★ = √(Δ Γ_Δ⁻¹ Δᵀ)，2×2 闭式求逆

    Raises:
        SingularCovarianceError: Γ_Δ 奇异或非正定
    """
    g = np.asarray(gamma_delta, dtype=float)
    a, b, c, d = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    det = a * d - b * c
    if not (a > 0 and d > 0) or abs(det) <= GAMMA_DELTA_DET_TOL * a * d or det <= 0:
        raise SingularCovarianceError(f"Gamma_Delta is not positive definite (det={det:.3e})")
    x, y = (delta.d_omega, delta.d_ell) if isinstance(delta, DeltaPair) else (delta[0], delta[1])
    # Γ⁻¹ = [[d, −b], [−c, a]] / det
    quad = (d * x * x - (b + c) * x * y + a * y * y) / det
    return math.sqrt(max(quad, 0.0))


def orbit_covariance(psi: PsiCovariance) -> Tuple[np.ndarray, np.ndarray]:
    """(𝒜₁, ℛ₁) 的 6×6 边缘协方差及其特征值（只报告，不要求正定）"""
    block = psi.gamma_psi[0:6, 0:6].copy()
    return block, np.linalg.eigvalsh(block)


@dataclass(frozen=True)
class CovarianceResult:
    psi: PsiCovariance
    dR_dA: np.ndarray
    dDelta_dA: np.ndarray
    norm: Optional[float]
    condition: float
    eigenvalues: np.ndarray
    flags: Tuple[str, ...] = ()


def solution_covariance(R: Sequence[float], A1: Attributable, A2: Attributable, delta: DeltaPair,
                        mean_motion_term: bool = True, aberration_term: bool = True) -> CovarianceResult:
    """
    单个解的完整协方差链：∂R/∂A、dΔ/dA、Γ_Ψ 与 ‖Δ‖★

    Γ_Δ 奇异时 norm 为 None 并带 "singular covariance" 标记；∂Φ/∂R 奇异时抛出。
    """
    dR_dA, cond = solution_jacobian(R, A1, A2)
    dD = delta_jacobians(R, A1, A2, dR_dA, mean_motion_term, aberration_term)
    psi = propagate(A1.gamma, A2.gamma, dR_dA, dD)
    _, eigenvalues = orbit_covariance(psi)
    flags = []
    try:
        norm = identification_norm(delta, psi.gamma_delta)
    except SingularCovarianceError as e:
        logger.debug("norm undefined: %s", e)
        norm = None
        flags.append("singular covariance")
    return CovarianceResult(psi, dR_dA, dD, norm, cond, eigenvalues, tuple(flags))


__all__ = [
    "PhiMap", "PsiCovariance", "OrbitPair", "CovarianceResult", "phi_map", "solution_jacobian",
    "refine_solution", "delta_jacobians", "propagate", "identification_norm", "orbit_covariance",
    "orbit_pair", "aberration_epoch", "solution_covariance",
]
