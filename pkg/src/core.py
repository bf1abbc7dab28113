"""
基础模块
物理常数、异常体系、精度后端、动标架与角度工具
"""

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

import mpmath
import numpy as np

VERSION = "0.2.0"

# 物理常数
GAUSS_K = 0.01720209895  # AU^(3/2)/day
MU_SUN = GAUSS_K ** 2
C_LIGHT = 173.144633  # AU/day
AU_KM = 149597870.7
EARTH_RADIUS_KM = 6378.137
MJD_TO_JD = 2400000.5
J2000_MJD = 51544.5
OBLIQUITY_J2000 = math.radians(84381.448 / 3600.0)
ARCSEC = math.pi / (180.0 * 3600.0)
TWO_PI = 2.0 * math.pi

# 时间统一用 MJD（天）
Epoch = float


# ---------------------------------------------------------------------------
# 异常体系：库代码只抛出这些异常，命令行层负责转换为退出码
# ---------------------------------------------------------------------------

class OrbitLinkError(Exception):
    """所有领域异常的基类"""

    exit_code = 3


class ConfigError(OrbitLinkError):
    exit_code = 1


class InputParseError(OrbitLinkError):
    """输入文件格式错误，携带文件名和行号"""

    exit_code = 2

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class InsufficientObservationsError(OrbitLinkError):
    pass


class DegenerateGeometryError(OrbitLinkError):
    """几何退化（C0-C4、零自行、D 向量平行）"""

    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(message or f"degenerate geometry: {kind}")


class ZeroResultantError(OrbitLinkError):
    """p 与 q 有公共因子，结式恒为零"""


class NumericalFaultError(OrbitLinkError):
    pass


class HyperbolicOrbitError(OrbitLinkError):
    """能量非负或角动量为零，超出椭圆轨道范围"""


class SingularCovarianceError(OrbitLinkError):
    pass


# ---------------------------------------------------------------------------
# 精度后端
# ---------------------------------------------------------------------------

class Precision(str, Enum):
    STANDARD = "standard"
    EXTENDED = "extended"


class Arithmetic:
    """
    标量运算后端

    STANDARD 使用 numpy float/complex；EXTENDED 使用独立的 mpmath 上下文，
    数组为 object 类型，元素是 mpf/mpc。多项式、FFT 与 LU 代码对两者通用。
    """

    def __init__(self, precision: Precision = Precision.EXTENDED, bits: int = 128):
        self.precision = Precision(precision)
        self.bits = bits if self.precision is Precision.EXTENDED else 53
        self.ctx = None
        if self.precision is Precision.EXTENDED:
            self.ctx = mpmath.MPContext()
            self.ctx.prec = bits

    def __repr__(self):
        return f"Arithmetic({self.precision.value}, bits={self.bits})"

    def __getstate__(self):
        return {"precision": self.precision, "bits": self.bits}

    def __setstate__(self, state):
        self.__init__(state["precision"], state["bits"])

    @property
    def extended(self) -> bool:
        return self.precision is Precision.EXTENDED

    @property
    def eps(self) -> float:
        """单次运算的相对舍入误差"""
        return 2.0 ** (1 - self.bits)

    @property
    def pi(self):
        return self.ctx.pi if self.extended else math.pi

    def real(self, x):
        if not self.extended:
            return float(x)
        if isinstance(x, (int, float)) or hasattr(x, "_mpf_"):
            return self.ctx.mpf(x)
        return self.ctx.mpf(float(x))

    def complex(self, x):
        if not self.extended:
            return complex(x)
        if isinstance(x, (int, float, complex)) or hasattr(x, "_mpc_") or hasattr(x, "_mpf_"):
            return self.ctx.mpc(x)
        return self.ctx.mpc(complex(x))

    def array(self, values: Iterable, complex_: bool = False) -> np.ndarray:
        """把任意嵌套序列转换为当前精度的数组"""
        raw = np.asarray(values, dtype=object)
        conv = self.complex if complex_ else self.real
        flat = [conv(v) for v in raw.ravel()]
        if self.extended:
            out = np.empty(raw.shape, dtype=object)
            out.ravel()[:] = flat
            return out
        return np.array(flat, dtype=complex if complex_ else float).reshape(raw.shape)

    def zeros(self, shape, complex_: bool = False) -> np.ndarray:
        if not self.extended:
            return np.zeros(shape, dtype=complex if complex_ else float)
        out = np.empty(shape, dtype=object)
        zero = self.ctx.mpc(0) if complex_ else self.ctx.mpf(0)
        out.fill(zero)
        return out

    def sqrt(self, x):
        """实数开方；负数自动返回复数"""
        if self.extended:
            return self.ctx.sqrt(x)
        if isinstance(x, complex) or x < 0:
            return cmath.sqrt(x)
        return math.sqrt(x)

    def csqrt(self, x):
        return self.ctx.sqrt(self.ctx.mpc(x)) if self.extended else cmath.sqrt(complex(x))

    def unit_roots(self, n: int, inverse: bool = False) -> list:
        """ω_k = exp(±2πik/n), k = 0..n-1"""
        sign = -1 if inverse else 1
        if self.extended:
            return [self.ctx.expjpi(self.ctx.mpf(2 * sign * k) / n) for k in range(n)]
        return [cmath.exp(sign * 2j * math.pi * k / n) for k in range(n)]

    @staticmethod
    def to_complex(x) -> complex:
        return complex(x)

    @staticmethod
    def to_float(x) -> float:
        if isinstance(x, complex) or hasattr(x, "_mpc_"):
            return float(complex(x).real)
        return float(x)


_BACKENDS = {}


def get_arithmetic(precision="extended", bits: int = 128) -> Arithmetic:
    """按 (精度, 位数) 缓存的后端实例"""
    key = (Precision(precision), bits)
    if key not in _BACKENDS:
        _BACKENDS[key] = Arithmetic(*key)
    return _BACKENDS[key]


# ---------------------------------------------------------------------------
# 动标架
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MobileBasis:
    rho_hat: np.ndarray
    rho_hat_alpha: np.ndarray
    rho_hat_delta: np.ndarray
    v_hat: np.ndarray
    n_hat: np.ndarray
    eta: float


def sky_vectors(alpha: float, delta: float):
    """观测方向 ρ̂ 及其对 α、δ 的偏导 ρ̂_α、ρ̂_δ"""
    ca, sa = math.cos(alpha), math.sin(alpha)
    cd, sd = math.cos(delta), math.sin(delta)
    rho_hat = np.array([ca * cd, sa * cd, sd])
    rho_hat_alpha = np.array([-sa * cd, ca * cd, 0.0])
    rho_hat_delta = np.array([-ca * sd, -sa * sd, cd])
    return rho_hat, rho_hat_alpha, rho_hat_delta


def proper_motion(alpha_dot: float, delta_dot: float, delta: float) -> float:
    return math.sqrt((alpha_dot * math.cos(delta)) ** 2 + delta_dot ** 2)


def mobile_basis(alpha: float, delta: float, alpha_dot: float, delta_dot: float) -> MobileBasis:
    """
    沿视运动路径的正交标架 {ρ̂, v̂, n̂}

    Args:
        alpha, delta: 赤经、赤纬（rad）
        alpha_dot, delta_dot: 角速度（rad/day）

    Returns:
        MobileBasis，其中 dρ̂/dt = η v̂，n̂ = ρ̂ × v̂

    Raises:
        DegenerateGeometryError: 自行 η 为零时 v̂、n̂ 无定义
    """
    if not abs(delta) < math.pi / 2:
        raise ValueError(f"赤纬超出范围: {delta}")
    rho_hat, rho_hat_alpha, rho_hat_delta = sky_vectors(alpha, delta)
    eta = proper_motion(alpha_dot, delta_dot, delta)
    if eta == 0.0:
        raise DegenerateGeometryError("ZeroProperMotion", "proper motion vanishes, v_hat undefined")
    v_hat = (alpha_dot * rho_hat_alpha + delta_dot * rho_hat_delta) / eta
    n_hat = np.cross(rho_hat, v_hat)
    return MobileBasis(rho_hat, rho_hat_alpha, rho_hat_delta, v_hat, n_hat, eta)


# ---------------------------------------------------------------------------
# 角度与坐标系
# ---------------------------------------------------------------------------

def normalize_angle(theta: float) -> float:
    """归一化到 [0, 2π)"""
    out = math.fmod(theta, TWO_PI)
    if out < 0:
        out += TWO_PI
    return 0.0 if out >= TWO_PI else out


def angle_diff_smooth(theta1: float, theta2: float) -> float:
    """θ₁−θ₂ 对 2π 取模后落在 (−π, π]，在零附近光滑"""
    d = math.fmod(theta1 - theta2 + math.pi, TWO_PI)
    if d < 0:
        d += TWO_PI
    d -= math.pi
    return math.pi if d <= -math.pi else d


def rotation_x(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


_ECL_TO_EQ = rotation_x(OBLIQUITY_J2000)


def ecliptic_to_equatorial(v: np.ndarray) -> np.ndarray:
    return _ECL_TO_EQ @ np.asarray(v, dtype=float)


def equatorial_to_ecliptic(v: np.ndarray) -> np.ndarray:
    return _ECL_TO_EQ.T @ np.asarray(v, dtype=float)


def angular_separation(u: np.ndarray, v: np.ndarray) -> float:
    """两方向夹角，atan2 形式在小角度时稳定"""
    return math.atan2(np.linalg.norm(np.cross(u, v)), float(np.dot(u, v)))
