"""
轨道根数模块
可归属根数、笛卡尔坐标与开普勒根数之间的转换，开普勒方程和相容性条件
"""

import math
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

try:
    from .core import (
        GAUSS_K, MU_SUN, HyperbolicOrbitError, NumericalFaultError,
        angle_diff_smooth, equatorial_to_ecliptic, normalize_angle, sky_vectors,
    )
except ImportError:
    from core import (
        GAUSS_K, MU_SUN, HyperbolicOrbitError, NumericalFaultError,
        angle_diff_smooth, equatorial_to_ecliptic, normalize_angle, sky_vectors,
    )

# 倾角或偏心率低于此值时相应角度无定义，只做标记
ANGLE_DEFINITION_TOL = 1e-8


@dataclass(frozen=True)
class AttributableElements:
    """(α, δ, α̇, δ̇, ρ, ρ̇)：球坐标及其时间导数，前四个分量即可归属量"""

    alpha: float
    delta: float
    alpha_dot: float
    delta_dot: float
    rho: float
    rho_dot: float
    epoch: float

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.delta, self.alpha_dot, self.delta_dot, self.rho, self.rho_dot])

    @classmethod
    def from_array(cls, values, epoch: float) -> "AttributableElements":
        return cls(*(float(v) for v in values), epoch=float(epoch))


@dataclass(frozen=True)
class KeplerianElements:
    """椭圆开普勒根数，角度为弧度"""

    a: float
    e: float
    I: float
    Omega: float
    omega: float
    ell: float
    epoch: float
    flags: Tuple[str, ...] = field(default=(), compare=False)

    @property
    def mean_motion(self) -> float:
        return mean_motion(self.a)

    def as_degrees(self, digits: int = 6) -> dict:
        return {
            "a": round(self.a, 10),
            "e": round(self.e, 10),
            "I": round(math.degrees(self.I), digits),
            "Omega": round(math.degrees(self.Omega), digits),
            "omega": round(math.degrees(self.omega), digits),
            "ell": round(math.degrees(self.ell), digits),
            "epoch": self.epoch,
        }


@dataclass(frozen=True)
class DeltaPair:
    """相容性条件的残差 (Δω, Δℓ)"""

    d_omega: float
    d_ell: float

    def as_array(self) -> np.ndarray:
        return np.array([self.d_omega, self.d_ell])


def mean_motion(a: float) -> float:
    return GAUSS_K * a ** -1.5


def attributable_to_cartesian(ae: AttributableElements, q: np.ndarray, q_dot: np.ndarray):
    """
    可归属根数 -> 日心位置与速度

    r = q + ρ ρ̂，ṙ = q̇ + ρ̇ ρ̂ + ρ (α̇ ρ̂_α + δ̇ ρ̂_δ)
    """
    if not ae.rho > 0:
        raise ValueError(f"rho 必须为正: {ae.rho}")
    rho_hat, rho_hat_alpha, rho_hat_delta = sky_vectors(ae.alpha, ae.delta)
    r = np.asarray(q, dtype=float) + ae.rho * rho_hat
    r_dot = (
        np.asarray(q_dot, dtype=float)
        + ae.rho_dot * rho_hat
        + ae.rho * (ae.alpha_dot * rho_hat_alpha + ae.delta_dot * rho_hat_delta)
    )
    return r, r_dot


def cartesian_to_attributable(r, r_dot, q, q_dot, epoch: float) -> AttributableElements:
    """attributable_to_cartesian 的逆：在观测标架上投影"""
    d = np.asarray(r, dtype=float) - np.asarray(q, dtype=float)
    v = np.asarray(r_dot, dtype=float) - np.asarray(q_dot, dtype=float)
    rho = float(np.linalg.norm(d))
    alpha = normalize_angle(math.atan2(d[1], d[0]))
    delta = math.asin(d[2] / rho)
    rho_hat, rho_hat_alpha, rho_hat_delta = sky_vectors(alpha, delta)
    return AttributableElements(
        alpha=alpha,
        delta=delta,
        alpha_dot=float(v @ rho_hat_alpha) / (rho * math.cos(delta) ** 2),
        delta_dot=float(v @ rho_hat_delta) / rho,
        rho=rho,
        rho_dot=float(v @ rho_hat),
        epoch=epoch,
    )


def attributable_jacobian(ae: AttributableElements) -> np.ndarray:
    """
    ∂(r, ṙ)/∂(α, δ, α̇, δ̇, ρ, ρ̇)，6×6，观测者状态视为常量
    """
    a, d = ae.alpha, ae.delta
    ca, sa, cd, sd = math.cos(a), math.sin(a), math.cos(d), math.sin(d)
    rho_hat, rho_hat_alpha, rho_hat_delta = sky_vectors(a, d)
    # 二阶导数
    d_alpha_alpha = np.array([-ca * cd, -sa * cd, 0.0])
    d_alpha_delta = np.array([sa * sd, -ca * sd, 0.0])
    d_delta_delta = -rho_hat

    jac = np.zeros((6, 6))
    jac[0:3, 0] = ae.rho * rho_hat_alpha
    jac[0:3, 1] = ae.rho * rho_hat_delta
    jac[0:3, 4] = rho_hat
    jac[3:6, 0] = ae.rho_dot * rho_hat_alpha + ae.rho * (ae.alpha_dot * d_alpha_alpha + ae.delta_dot * d_alpha_delta)
    jac[3:6, 1] = ae.rho_dot * rho_hat_delta + ae.rho * (ae.alpha_dot * d_alpha_delta + ae.delta_dot * d_delta_delta)
    jac[3:6, 2] = ae.rho * rho_hat_alpha
    jac[3:6, 3] = ae.rho * rho_hat_delta
    jac[3:6, 4] = ae.alpha_dot * rho_hat_alpha + ae.delta_dot * rho_hat_delta
    jac[3:6, 5] = rho_hat
    return jac


def solve_kepler(ell: float, e: float, tol: float = 1e-15, max_iter: int = 50) -> float:
    """
    求解 E − e sin E = ℓ

    Args:
        ell: 平近点角（rad）
        e: 偏心率，0 ≤ e < 1

    Returns:
        偏近点角 E，与 ℓ 处于同一圈
    """
    if not 0.0 <= e < 1.0:
        raise ValueError(f"偏心率超出椭圆范围: {e}")
    m = angle_diff_smooth(ell, 0.0)
    base = ell - m
    s = math.sin(m)
    ecc_anomaly = m + e * (1.0 if s > 0 else -1.0 if s < 0 else 0.0)
    for _ in range(max_iter):
        step = (ecc_anomaly - e * math.sin(ecc_anomaly) - m) / (1.0 - e * math.cos(ecc_anomaly))
        ecc_anomaly -= step
        if abs(step) < tol:
            break
    return ecc_anomaly + base


def lenz_vector(r: np.ndarray, r_dot: np.ndarray) -> np.ndarray:
    """Lenz–Laplace 向量 L = ṙ×c/k² − r/|r|，指向近日点，模为 e"""
    c = np.cross(r, r_dot)
    return np.cross(r_dot, c) / MU_SUN - r / np.linalg.norm(r)


def cartesian_to_keplerian(r: np.ndarray, r_dot: np.ndarray, epoch: float) -> KeplerianElements:
    """
    日心状态 -> 开普勒根数（与输入向量同一参考系）

    Raises:
        HyperbolicOrbitError: 能量非负或角动量为零
    """
    r = np.asarray(r, dtype=float)
    r_dot = np.asarray(r_dot, dtype=float)
    rn = float(np.linalg.norm(r))
    c = np.cross(r, r_dot)
    cn = float(np.linalg.norm(c))
    if cn == 0.0:
        raise HyperbolicOrbitError("angular momentum vanishes (rectilinear motion)")
    energy = 0.5 * float(r_dot @ r_dot) - MU_SUN / rn
    if energy >= 0.0:
        raise HyperbolicOrbitError(f"non-negative two-body energy {energy:.3e}")

    flags = []
    a = -MU_SUN / (2.0 * energy)
    e = float(np.linalg.norm(lenz_vector(r, r_dot)))
    if e >= 1.0:
        raise HyperbolicOrbitError(f"eccentricity {e} outside elliptic range")

    c_hat = c / cn
    inc = math.acos(max(-1.0, min(1.0, c_hat[2])))
    if math.sin(inc) < ANGLE_DEFINITION_TOL:
        # 节点无定义：Ω 取 0，节点方向并入 ω
        flags.append("near-zero inclination")
        node = 0.0
    else:
        node = normalize_angle(math.atan2(c_hat[0], -c_hat[1]))
    n_hat = np.array([math.cos(node), math.sin(node), 0.0])
    m_hat = np.cross(c_hat, n_hat)

    # 偏近点角由位置、速度投影得到
    sqrt_mu_a = math.sqrt(MU_SUN * a)
    e_sin = float(r @ r_dot) / sqrt_mu_a
    e_cos = 1.0 - rn / a
    if e < ANGLE_DEFINITION_TOL:
        flags.append("near-circular")
    ecc_anomaly = math.atan2(e_sin, e_cos)
    true_anomaly = 2.0 * math.atan2(
        math.sqrt(1.0 + e) * math.sin(ecc_anomaly / 2.0),
        math.sqrt(1.0 - e) * math.cos(ecc_anomaly / 2.0),
    )
    arg_latitude = math.atan2(float(r @ m_hat), float(r @ n_hat))

    return KeplerianElements(
        a=a,
        e=e,
        I=inc,
        Omega=node,
        omega=normalize_angle(arg_latitude - true_anomaly),
        ell=normalize_angle(ecc_anomaly - e * math.sin(ecc_anomaly)),
        epoch=epoch,
        flags=tuple(flags),
    )


def _perifocal_axes(inc: float, node: float, peri: float):
    cO, sO = math.cos(node), math.sin(node)
    cw, sw = math.cos(peri), math.sin(peri)
    ci, si = math.cos(inc), math.sin(inc)
    p_vec = np.array([cO * cw - sO * sw * ci, sO * cw + cO * sw * ci, sw * si])
    q_vec = np.array([-cO * sw - sO * cw * ci, -sO * sw + cO * cw * ci, cw * si])
    return p_vec, q_vec


def keplerian_to_cartesian(el: KeplerianElements, t: float):
    """
    二体传播到 t 时刻并返回 (r, ṙ)

    ℓ(t) = ℓ₀ + n (t − t₀)，n = k a^(−3/2)
    """
    if not (el.a > 0 and 0.0 <= el.e < 1.0):
        raise HyperbolicOrbitError(f"elements outside elliptic domain: a={el.a}, e={el.e}")
    n = mean_motion(el.a)
    ecc_anomaly = solve_kepler(el.ell + n * (t - el.epoch), el.e)
    cE, sE = math.cos(ecc_anomaly), math.sin(ecc_anomaly)
    beta = math.sqrt(1.0 - el.e ** 2)
    radius = el.a * (1.0 - el.e * cE)
    p_vec, q_vec = _perifocal_axes(el.I, el.Omega, el.omega)
    r = el.a * (cE - el.e) * p_vec + el.a * beta * sE * q_vec
    scale = n * el.a ** 2 / radius
    r_dot = -scale * sE * p_vec + scale * beta * cE * q_vec
    return r, r_dot


def propagate_elements(el: KeplerianElements, t: float) -> KeplerianElements:
    """只推进平近点角"""
    return replace(el, ell=normalize_angle(el.ell + el.mean_motion * (t - el.epoch)), epoch=t)


def attributable_to_keplerian(ae: AttributableElements, q, q_dot, epoch: float = None) -> KeplerianElements:
    """可归属根数 -> 黄道 J2000 开普勒根数（工作坐标系为赤道 J2000）"""
    r, r_dot = attributable_to_cartesian(ae, q, q_dot)
    return cartesian_to_keplerian(
        equatorial_to_ecliptic(r),
        equatorial_to_ecliptic(r_dot),
        ae.epoch if epoch is None else epoch,
    )


def compatibility_delta(k1: KeplerianElements, k2: KeplerianElements, t1: float, t2: float,
                        tol: float = 1e-9) -> DeltaPair:
    """
    相容性条件 ω₁ = ω₂，ℓ₁ = ℓ₂ + n (t₁ − t₂) 的光滑残差

    Raises:
        NumericalFaultError: 两组根数的 (a, e, I, Ω) 不一致
    """
    h1 = np.array([math.sin(k1.Omega) * math.sin(k1.I), -math.cos(k1.Omega) * math.sin(k1.I), math.cos(k1.I)])
    h2 = np.array([math.sin(k2.Omega) * math.sin(k2.I), -math.cos(k2.Omega) * math.sin(k2.I), math.cos(k2.I)])
    if (
        abs(k1.a - k2.a) > tol * k1.a
        or abs(k1.e - k2.e) > tol * max(1.0, k1.e)
        or float(np.linalg.norm(h1 - h2)) > tol
    ):
        raise NumericalFaultError(
            f"orbits do not share (a, e, I, Omega): a {k1.a}/{k2.a}, e {k1.e}/{k2.e}"
        )
    return DeltaPair(
        d_omega=angle_diff_smooth(k1.omega, k2.omega),
        d_ell=angle_diff_smooth(k1.ell, k2.ell + k1.mean_motion * (t1 - t2)),
    )
