"""
积分方程模块
角动量与能量积分的系数、二次曲线 q、24 次多项式 p、视向速度恢复和退化检测
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

try:
    from .attributable import Attributable
    from .core import (
        GAUSS_K, Arithmetic, DegenerateGeometryError, MobileBasis, get_arithmetic,
        mobile_basis, proper_motion, sky_vectors,
    )
except ImportError:
    from attributable import Attributable
    from core import (
        GAUSS_K, Arithmetic, DegenerateGeometryError, MobileBasis, get_arithmetic,
        mobile_basis, proper_motion, sky_vectors,
    )

logger = logging.getLogger(__name__)

# |D₁×D₂| / (|D₁||D₂|) 低于此值视为 D 向量平行
PARALLEL_D_TOL = 1e-8
# 退化条件 C0-C4 的检测阈值（单位向量点积，乘以 |q|）
DEGENERACY_TOL = 1e-10

DEGENERACY_KINDS = ("None", "ZeroProperMotion", "C0", "C1", "C2", "C3", "C4", "ParallelD")


@dataclass(frozen=True)
class IntegralCoeffs:
    """单个时刻的积分系数：c = Dρ̇ + Eρ² + Fρ + G，2ℰ = ρ̇² + c1ρ̇ + c2ρ² + c3ρ + c4 − 2k²/√(ρ² + c5ρ + c0)"""

    D: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    c: tuple
    eta: float
    basis: Optional[MobileBasis]
    q: np.ndarray
    q_dot: np.ndarray
    epoch: float

    def F_energy(self, rho: float, rho_dot: float) -> float:
        """ℱ(ρ, ρ̇) = |ṙ|²"""
        c = self.c
        return rho_dot ** 2 + c[1] * rho_dot + c[2] * rho ** 2 + c[3] * rho + c[4]

    def G_energy(self, rho: float) -> float:
        """𝒢(ρ) = |r|²"""
        c = self.c
        return rho ** 2 + c[5] * rho + c[0]

    def angular_momentum(self, rho: float, rho_dot: float) -> np.ndarray:
        return self.D * rho_dot + self.E * rho ** 2 + self.F * rho + self.G

    def energy(self, rho: float, rho_dot: float) -> float:
        return 0.5 * self.F_energy(rho, rho_dot) - GAUSS_K ** 2 / math.sqrt(self.G_energy(rho))


def compute_coeffs(A: Attributable) -> IntegralCoeffs:
    """
    由可归属量和观测者状态计算积分系数

    Args:
        A: 带有 q_obs、q_dot_obs 的可归属量

    Returns:
        IntegralCoeffs
    """
    if not A.has_observer:
        raise ValueError(f"可归属量 {A.id or '?'} 缺少观测者状态")
    q = np.asarray(A.q_obs, dtype=float)
    q_dot = np.asarray(A.q_dot_obs, dtype=float)
    rho_hat, rho_hat_alpha, rho_hat_delta = sky_vectors(A.alpha, A.delta)
    eta = proper_motion(A.alpha_dot, A.delta_dot, A.delta)
    basis = mobile_basis(A.alpha, A.delta, A.alpha_dot, A.delta_dot) if eta > 0 else None

    D = np.cross(q, rho_hat)
    E = A.alpha_dot * np.cross(rho_hat, rho_hat_alpha) + A.delta_dot * np.cross(rho_hat, rho_hat_delta)
    F = (A.alpha_dot * np.cross(q, rho_hat_alpha) + A.delta_dot * np.cross(q, rho_hat_delta)
         + np.cross(rho_hat, q_dot))
    G = np.cross(q, q_dot)
    c = (
        float(q @ q),
        2.0 * float(q_dot @ rho_hat),
        eta ** 2,
        2.0 * (A.alpha_dot * float(q_dot @ rho_hat_alpha) + A.delta_dot * float(q_dot @ rho_hat_delta)),
        float(q_dot @ q_dot),
        2.0 * float(q @ rho_hat),
    )
    return IntegralCoeffs(D, E, F, G, c, eta, basis, q, q_dot, A.epoch)


# ---------------------------------------------------------------------------
# 二元多项式
# ---------------------------------------------------------------------------

class BivariatePoly:
    """
    二元多项式 Σ coeffs[i, j] ρ₁^i ρ₂^j

    系数数组的元素类型由 Arithmetic 决定（float 或 mpf/mpc 对象）。
    """

    def __init__(self, coeffs: np.ndarray, arith: Arithmetic):
        self.coeffs = coeffs
        self.arith = arith

    @classmethod
    def zero(cls, shape, arith: Arithmetic) -> "BivariatePoly":
        return cls(arith.zeros(shape), arith)

    @classmethod
    def from_terms(cls, terms: Dict[tuple, object], arith: Arithmetic) -> "BivariatePoly":
        n1 = max(i for i, _ in terms) + 1
        n2 = max(j for _, j in terms) + 1
        out = arith.zeros((n1, n2))
        for (i, j), value in terms.items():
            out[i, j] = out[i, j] + value
        return cls(out, arith)

    @property
    def shape(self):
        return self.coeffs.shape

    @property
    def _index_dtype(self):
        return object if self.arith.extended else float

    def __add__(self, other: "BivariatePoly") -> "BivariatePoly":
        shape = (max(self.shape[0], other.shape[0]), max(self.shape[1], other.shape[1]))
        out = self.arith.zeros(shape)
        out[: self.shape[0], : self.shape[1]] += self.coeffs
        out[: other.shape[0], : other.shape[1]] += other.coeffs
        return BivariatePoly(out, self.arith)

    def __neg__(self) -> "BivariatePoly":
        return BivariatePoly(-self.coeffs, self.arith)

    def __sub__(self, other: "BivariatePoly") -> "BivariatePoly":
        return self + (-other)

    def __mul__(self, other) -> "BivariatePoly":
        if not isinstance(other, BivariatePoly):
            return BivariatePoly(self.coeffs * other, self.arith)
        n1, n2 = self.shape
        m1, m2 = other.shape
        out = self.arith.zeros((n1 + m1 - 1, n2 + m2 - 1))
        for i in range(n1):
            for j in range(n2):
                a = self.coeffs[i, j]
                if a == 0:
                    continue
                out[i:i + m1, j:j + m2] += a * other.coeffs
        return BivariatePoly(out, self.arith)

    __rmul__ = __mul__

    def evaluate(self, x, y):
        """Horner 求值，先对 ρ₂ 再对 ρ₁"""
        total = 0
        for i in range(self.shape[0] - 1, -1, -1):
            row = 0
            for j in range(self.shape[1] - 1, -1, -1):
                row = row * y + self.coeffs[i, j]
            total = total * x + row
        return total

    def magnitude(self, x, y) -> float:
        """Σ|c_ij||x|^i|y|^j，用于残差归一化"""
        ax, ay = abs(x), abs(y)
        total = 0
        for i in range(self.shape[0] - 1, -1, -1):
            row = 0
            for j in range(self.shape[1] - 1, -1, -1):
                row = row * ay + abs(self.coeffs[i, j])
            total = total * ax + row
        return total

    def derivative(self, var: int) -> "BivariatePoly":
        """对 ρ₁（var=0）或 ρ₂（var=1）求偏导"""
        c = self.coeffs
        if var == 0:
            if self.shape[0] == 1:
                return BivariatePoly.zero((1, self.shape[1]), self.arith)
            scale = np.array(range(1, self.shape[0]), dtype=self._index_dtype).reshape(-1, 1)
            return BivariatePoly(c[1:, :] * scale, self.arith)
        if self.shape[1] == 1:
            return BivariatePoly.zero((self.shape[0], 1), self.arith)
        scale = np.array(range(1, self.shape[1]), dtype=self._index_dtype).reshape(1, -1)
        return BivariatePoly(c[:, 1:] * scale, self.arith)

    def transpose(self) -> "BivariatePoly":
        """交换 ρ₁ 与 ρ₂"""
        return BivariatePoly(self.coeffs.T.copy(), self.arith)

    def nonzero_mask(self) -> np.ndarray:
        return np.vectorize(lambda v: v != 0, otypes=[bool])(self.coeffs)

    def total_degree(self) -> int:
        idx = np.argwhere(self.nonzero_mask())
        return int(idx.sum(axis=1).max()) if len(idx) else -1

    def degree_in(self, var: int) -> int:
        idx = np.argwhere(self.nonzero_mask())
        return int(idx[:, var].max()) if len(idx) else -1

    def column_degrees(self) -> list:
        """a_j(ρ₂)（ρ₁^j 的系数多项式）的次数，零多项式记为 −1"""
        mask = self.nonzero_mask()
        out = []
        for i in range(self.shape[0]):
            nz = np.nonzero(mask[i])[0]
            out.append(int(nz.max()) if len(nz) else -1)
        return out

    def max_abs(self):
        """最大系数绝对值（保持当前精度，不转换为 float）"""
        return max(abs(v) for v in self.coeffs.ravel())

    def as_float(self) -> np.ndarray:
        return np.vectorize(Arithmetic.to_float, otypes=[float])(self.coeffs)


# ---------------------------------------------------------------------------
# 二次曲线 q 与 24 次多项式 p
# ---------------------------------------------------------------------------

def _xvec(arith: Arithmetic, v) -> list:
    return [arith.real(float(x)) for x in v]


def _xdot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _xcross(a, b) -> list:
    return [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]


@dataclass(frozen=True)
class ConicQ:
    """q(ρ₁, ρ₂) = q20ρ₁² + q10ρ₁ + q02ρ₂² + q01ρ₂ + q00"""

    q20: object
    q10: object
    q02: object
    q01: object
    q00: object

    def evaluate(self, rho1, rho2):
        return self.q20 * rho1 ** 2 + self.q10 * rho1 + self.q02 * rho2 ** 2 + self.q01 * rho2 + self.q00

    def scale(self, rho1, rho2) -> float:
        """各单项式绝对值之和"""
        return float(abs(self.q20) * abs(rho1) ** 2 + abs(self.q10) * abs(rho1)
                     + abs(self.q02) * abs(rho2) ** 2 + abs(self.q01) * abs(rho2) + abs(self.q00))

    def swapped(self) -> "ConicQ":
        """交换两个变量（不改变曲线本身）"""
        return ConicQ(self.q02, self.q01, self.q20, self.q10, self.q00)

    def as_poly(self, arith: Arithmetic) -> BivariatePoly:
        return BivariatePoly.from_terms(
            {(2, 0): self.q20, (1, 0): self.q10, (0, 2): self.q02, (0, 1): self.q01, (0, 0): self.q00},
            arith,
        )

    def as_floats(self) -> tuple:
        return tuple(Arithmetic.to_float(v) for v in (self.q20, self.q10, self.q02, self.q01, self.q00))


def _check_parallel_d(c1: IntegralCoeffs, c2: IntegralCoeffs) -> float:
    n1, n2 = np.linalg.norm(c1.D), np.linalg.norm(c2.D)
    if n1 == 0.0 or n2 == 0.0:
        raise DegenerateGeometryError("ParallelD", "D vector vanishes (observer along the line of sight)")
    ratio = float(np.linalg.norm(np.cross(c1.D, c2.D)) / (n1 * n2))
    if ratio < PARALLEL_D_TOL:
        raise DegenerateGeometryError("ParallelD", f"|D1 x D2| / (|D1||D2|) = {ratio:.3e}")
    return ratio


def build_conic(c1: IntegralCoeffs, c2: IntegralCoeffs, arith: Optional[Arithmetic] = None) -> ConicQ:
    """
    角动量方程在 D₁×D₂ 方向的投影

    Raises:
        DegenerateGeometryError: D₁ 与 D₂ 平行（ParallelD）
    """
    arith = arith or get_arithmetic()
    _check_parallel_d(c1, c2)
    P = _xcross(_xvec(arith, c1.D), _xvec(arith, c2.D))
    E1, E2 = _xvec(arith, c1.E), _xvec(arith, c2.E)
    F1, F2 = _xvec(arith, c1.F), _xvec(arith, c2.F)
    dG = [g2 - g1 for g1, g2 in zip(_xvec(arith, c1.G), _xvec(arith, c2.G))]
    return ConicQ(
        q20=-_xdot(E1, P),
        q10=-_xdot(F1, P),
        q02=_xdot(E2, P),
        q01=_xdot(F2, P),
        q00=_xdot(dG, P),
    )


@dataclass
class BivariateSystem:
    """
    {q = 0, p = 0} 及其构造中间量

    p 是 Δ⁸ 倍的能量多项式（Δ = |D₁×D₂|²）再除以 p_scale，零点不变。
    """

    conic: ConicQ
    p: BivariatePoly
    delta: object
    N1: BivariatePoly
    N2: BivariatePoly
    arith: Arithmetic
    coeffs1: IntegralCoeffs = field(repr=False, default=None)
    coeffs2: IntegralCoeffs = field(repr=False, default=None)
    p_scale: object = 1

    def transposed(self) -> "BivariateSystem":
        """交换变量后的同一方程组（消去 ρ₂ 时使用）"""
        return BivariateSystem(
            conic=self.conic.swapped(),
            p=self.p.transpose(),
            delta=self.delta,
            N1=self.N2.transpose(),
            N2=self.N1.transpose(),
            arith=self.arith,
            coeffs1=self.coeffs2,
            coeffs2=self.coeffs1,
            p_scale=self.p_scale,
        )


def _radial_numerators(c1: IntegralCoeffs, c2: IntegralCoeffs, arith: Arithmetic):
    """N₁ = J·(D₂×P)，N₂ = J·(D₁×P)，ρ̇ᵢ = Nᵢ/Δ"""
    D1, D2 = _xvec(arith, c1.D), _xvec(arith, c2.D)
    P = _xcross(D1, D2)
    delta = _xdot(P, P)
    u1 = _xcross(D2, P)
    u2 = _xcross(D1, P)
    E1, E2 = _xvec(arith, c1.E), _xvec(arith, c2.E)
    F1, F2 = _xvec(arith, c1.F), _xvec(arith, c2.F)
    dG = [g2 - g1 for g1, g2 in zip(_xvec(arith, c1.G), _xvec(arith, c2.G))]

    def numerator(u):
        return BivariatePoly.from_terms({
            (2, 0): -_xdot(E1, u),
            (1, 0): -_xdot(F1, u),
            (0, 2): _xdot(E2, u),
            (0, 1): _xdot(F2, u),
            (0, 0): _xdot(dG, u),
        }, arith)

    return numerator(u1), numerator(u2), delta


def _scaled_F(N: BivariatePoly, c: tuple, delta, var: int, arith: Arithmetic) -> BivariatePoly:
    """Δ²ℱᵢ = Nᵢ² + c1 Δ Nᵢ + Δ²(c2ρᵢ² + c3ρᵢ + c4)"""
    cc = [arith.real(v) for v in c]
    d2 = delta * delta
    if var == 0:
        tail = {(2, 0): d2 * cc[2], (1, 0): d2 * cc[3], (0, 0): d2 * cc[4]}
    else:
        tail = {(0, 2): d2 * cc[2], (0, 1): d2 * cc[3], (0, 0): d2 * cc[4]}
    return N * N + N * (cc[1] * delta) + BivariatePoly.from_terms(tail, arith)


def _G_poly(c: tuple, var: int, arith: Arithmetic) -> BivariatePoly:
    cc = [arith.real(v) for v in c]
    if var == 0:
        return BivariatePoly.from_terms({(2, 0): arith.real(1), (1, 0): cc[5], (0, 0): cc[0]}, arith)
    return BivariatePoly.from_terms({(0, 2): arith.real(1), (0, 1): cc[5], (0, 0): cc[0]}, arith)


def build_p(c1: IntegralCoeffs, c2: IntegralCoeffs, conic: Optional[ConicQ] = None,
            arith: Optional[Arithmetic] = None) -> BivariateSystem:
    """
    构造能量方程两次平方后的多项式 p（乘以 Δ⁸ 清除分母）

    p = [𝔽²𝒢₁𝒢₂ − κ(𝒢₁+𝒢₂)]² − 4κ²𝒢₁𝒢₂，𝔽 = Δ²(ℱ₁−ℱ₂)，κ = 4k⁴Δ⁴

    Args:
        c1, c2: 两个时刻的积分系数
        conic: 已构造的二次曲线，缺省时重新计算
        arith: 运算精度后端

    Returns:
        BivariateSystem，p 的系数为 21×21 数组，总次数 24

    Raises:
        DegenerateGeometryError: ParallelD
    """
    arith = arith or get_arithmetic()
    conic = conic or build_conic(c1, c2, arith)
    N1, N2, delta = _radial_numerators(c1, c2, arith)

    FF = _scaled_F(N1, c1.c, delta, 0, arith) - _scaled_F(N2, c2.c, delta, 1, arith)
    G1 = _G_poly(c1.c, 0, arith)
    G2 = _G_poly(c2.c, 1, arith)
    k4 = arith.real(GAUSS_K) ** 4
    kappa = 4 * k4 * delta ** 4

    G1G2 = G1 * G2
    inner = FF * FF * G1G2 - (G1 + G2) * kappa
    p = inner * inner - G1G2 * (4 * kappa * kappa)
    # 常数因子不影响零点，归一化到最大系数为 1
    scale = p.max_abs()
    if scale != 0:
        p = p * (1 / scale)
    logger.debug("built p: shape %s, total degree %d", p.shape, p.total_degree())
    return BivariateSystem(conic, p, delta, N1, N2, arith, c1, c2, p_scale=scale)


def radial_velocities(c1: IntegralCoeffs, c2: IntegralCoeffs, rho1: float, rho2: float):
    """
    把角动量方程投影到 D₁×D₂ 的法向，解出 (ρ̇₁, ρ̇₂)

    Raises:
        DegenerateGeometryError: ParallelD
    """
    _check_parallel_d(c1, c2)
    P = np.cross(c1.D, c2.D)
    delta = float(P @ P)
    J = c2.E * rho2 ** 2 - c1.E * rho1 ** 2 + c2.F * rho2 - c1.F * rho1 + c2.G - c1.G
    return float(J @ np.cross(c2.D, P)) / delta, float(J @ np.cross(c1.D, P)) / delta


def angular_momentum_residual(c1: IntegralCoeffs, c2: IntegralCoeffs, rho1, rho1_dot, rho2, rho2_dot):
    """c₁ − c₂ = D₁ρ̇₁ − D₂ρ̇₂ − J"""
    return c1.angular_momentum(rho1, rho1_dot) - c2.angular_momentum(rho2, rho2_dot)


@dataclass(frozen=True)
class EnergyResiduals:
    raw: float
    first_squared: float
    raw_scaled: float
    first_squared_scaled: float
    unphysical: bool = False

    def spurious_flags(self, tol: float) -> list:
        if self.unphysical:
            return ["unphysical sqrt domain"]
        flags = []
        if not abs(self.raw_scaled) < tol:
            flags.append("spurious: energy (unsquared)")
        if not abs(self.first_squared_scaled) < tol:
            flags.append("spurious: energy (first square)")
        return flags


def energy_residuals(c1: IntegralCoeffs, c2: IntegralCoeffs, rho1: float, rho2: float,
                     rho1_dot: float, rho2_dot: float) -> EnergyResiduals:
    """
    未平方与平方一次的能量方程残差

    残差按参与项的最大量级归一化；𝒢ᵢ ≤ 0 时标记为非物理。
    """
    G1, G2 = c1.G_energy(rho1), c2.G_energy(rho2)
    if G1 <= 0 or G2 <= 0:
        nan = float("nan")
        return EnergyResiduals(nan, nan, nan, nan, unphysical=True)
    F1, F2 = c1.F_energy(rho1, rho1_dot), c2.F_energy(rho2, rho2_dot)
    k2 = GAUSS_K ** 2
    k4 = k2 * k2
    s1, s2 = math.sqrt(G1), math.sqrt(G2)

    raw = (F1 - 2 * k2 / s1) - (F2 - 2 * k2 / s2)
    raw_scale = max(abs(F1), abs(F2), 2 * k2 / s1, 2 * k2 / s2)

    dF = F1 - F2
    first = dF * dF * G1 * G2 - 4 * k4 * (G1 + G2) + 8 * k4 * s1 * s2
    first_scale = max((abs(F1) + abs(F2)) ** 2 * G1 * G2, 4 * k4 * (G1 + G2), 8 * k4 * s1 * s2)
    return EnergyResiduals(raw, first, raw / raw_scale, first / first_scale)


@dataclass(frozen=True)
class Degeneracy:
    kind: str
    diagnostics: Dict[str, float]

    @property
    def degenerate(self) -> bool:
        return self.kind != "None"


def check_degeneracy(c1: IntegralCoeffs, c2: IntegralCoeffs, tol: float = DEGENERACY_TOL) -> Degeneracy:
    """
    检查 C0-C4、零自行与 D 平行，返回第一个触发的条件
    """
    diag: Dict[str, float] = {"eta1": c1.eta, "eta2": c2.eta}
    if c1.basis is None or c2.basis is None:
        return Degeneracy("ZeroProperMotion", diag)

    rho1, rho2 = c1.basis.rho_hat, c2.basis.rho_hat
    n12 = np.cross(rho1, rho2)
    n12_norm = float(np.linalg.norm(n12))
    q1_norm = max(float(np.linalg.norm(c1.q)), 1e-300)
    q2_norm = max(float(np.linalg.norm(c2.q)), 1e-300)
    diag.update({
        "n12": n12_norm,
        "n1_q1": abs(float(c1.basis.n_hat @ c1.q)) / q1_norm,
        "n2_q2": abs(float(c2.basis.n_hat @ c2.q)) / q2_norm,
        "n12_q1": abs(float(n12 @ c1.q)) / q1_norm,
        "n12_q2": abs(float(n12 @ c2.q)) / q2_norm,
    })
    d1, d2 = np.linalg.norm(c1.D), np.linalg.norm(c2.D)
    diag["parallel_d"] = float(np.linalg.norm(np.cross(c1.D, c2.D)) / (d1 * d2)) if d1 * d2 > 0 else 0.0

    small = {key: diag[key] < tol for key in ("n12", "n1_q1", "n2_q2", "n12_q1", "n12_q2")}
    if small["n12"]:
        return Degeneracy("C0", diag)
    if small["n1_q1"] and small["n2_q2"]:
        return Degeneracy("C1", diag)
    if small["n12_q1"] and small["n12_q2"]:
        return Degeneracy("C2", diag)
    if small["n1_q1"] and small["n12_q1"]:
        return Degeneracy("C3", diag)
    if small["n2_q2"] and small["n12_q2"]:
        return Degeneracy("C4", diag)
    if diag["parallel_d"] < PARALLEL_D_TOL:
        return Degeneracy("ParallelD", diag)
    return Degeneracy("None", diag)


__all__ = [
    "IntegralCoeffs", "BivariatePoly", "ConicQ", "BivariateSystem", "EnergyResiduals", "Degeneracy",
    "compute_coeffs", "build_conic", "build_p", "radial_velocities", "energy_residuals",
    "check_degeneracy", "angular_momentum_residual", "DEGENERACY_KINDS",
]
