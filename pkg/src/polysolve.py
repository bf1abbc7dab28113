"""
多项式方程组求解模块
DFT 插值的 Sylvester 结式、正规形式约化与同时迭代求根
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

try:
    from .core import Arithmetic, DegenerateGeometryError, ZeroResultantError, get_arithmetic
    from .integrals import BivariateSystem, ConicQ
except ImportError:
    from core import Arithmetic, DegenerateGeometryError, ZeroResultantError, get_arithmetic
    from integrals import BivariateSystem, ConicQ

logger = logging.getLogger(__name__)

DFT_SIZE = 64
RESULTANT_DEGREE = 48


# ---------------------------------------------------------------------------
# 一元多项式与 DFT
# ---------------------------------------------------------------------------

@dataclass
class UnivariatePoly:
    """升幂系数的一元多项式"""

    coeffs: list
    arith: Arithmetic
    trimmed: int = 0
    trim_threshold: float = 0.0

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def evaluate(self, z):
        total = 0
        for c in reversed(self.coeffs):
            total = total * z + c
        return total

    def derivative(self) -> "UnivariatePoly":
        return UnivariatePoly([k * c for k, c in enumerate(self.coeffs)][1:] or [self.arith.complex(0)],
                              self.arith)

    def max_abs(self):
        return max(abs(c) for c in self.coeffs)

    def trim(self, rel_tol: float = 0.0) -> "UnivariatePoly":
        """去掉相对最大系数不超过 rel_tol 的首项，记录去掉的个数"""
        scale = self.max_abs()
        coeffs = list(self.coeffs)
        dropped = 0
        while len(coeffs) > 1 and abs(coeffs[-1]) <= rel_tol * scale:
            coeffs.pop()
            dropped += 1
        return UnivariatePoly(coeffs, self.arith, self.trimmed + dropped, rel_tol * float(scale))


def _fft(values: list, roots: list) -> list:
    """基 2 递归 FFT：out[k] = Σ values[j] roots[k]^j（roots 为单位根的幂序列）"""
    n = len(values)
    if n == 1:
        return list(values)
    even = _fft(values[0::2], roots[0::2])
    odd = _fft(values[1::2], roots[0::2])
    out = [None] * n
    half = n // 2
    for k in range(half):
        t = roots[k] * odd[k]
        out[k] = even[k] + t
        out[k + half] = even[k] - t
    return out


def dft_evaluate(coeffs: Sequence, arith: Optional[Arithmetic] = None, n: int = DFT_SIZE) -> list:
    """
    在 n 次单位根 ω_k = exp(2πik/n) 上求多项式的值

    Raises:
        ValueError: 次数不小于 n
    """
    arith = arith or get_arithmetic()
    if len(coeffs) > n:
        raise ValueError(f"多项式次数 {len(coeffs) - 1} 不小于 DFT 点数 {n}")
    padded = [arith.complex(c) for c in coeffs] + [arith.complex(0)] * (n - len(coeffs))
    return _fft(padded, arith.unit_roots(n))


def idft_interpolate(values: Sequence, arith: Optional[Arithmetic] = None, n: int = DFT_SIZE) -> UnivariatePoly:
    """dft_evaluate 的逆：由 n 个单位根上的值恢复次数小于 n 的多项式"""
    arith = arith or get_arithmetic()
    if len(values) != n:
        raise ValueError(f"需要 {n} 个插值点，得到 {len(values)}")
    raw = _fft([arith.complex(v) for v in values], arith.unit_roots(n, inverse=True))
    inv_n = arith.real(1) / n
    return UnivariatePoly([c * inv_n for c in raw], arith)


# ---------------------------------------------------------------------------
# 同时迭代求根（Aberth–Ehrlich）
# ---------------------------------------------------------------------------

@dataclass
class Root:
    value: object
    error_bound: float
    converged: bool = True
    multiplicity: int = 1

    @property
    def complex(self) -> complex:
        return complex(self.value)


@dataclass
class RootSet:
    roots: List[Root]
    iterations: int = 0
    converged: bool = True

    def values(self) -> np.ndarray:
        return np.array([r.complex for r in self.roots])

    def __len__(self):
        return len(self.roots)


def _newton_polygon_guesses(coeffs: np.ndarray, offset: float = 0.4) -> np.ndarray:
    """按 Newton 多边形（log|a_k| 的上凸包）分段给出初始圆周点"""
    n = len(coeffs) - 1
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(coeffs))
    pts = [k for k in range(n + 1) if np.isfinite(logs[k])]
    hull: List[int] = []
    for k in pts:
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            if (logs[j] - logs[i]) * (k - i) <= (logs[k] - logs[i]) * (j - i):
                hull.pop()
            else:
                break
        hull.append(k)
    guesses = []
    for i, j in zip(hull[:-1], hull[1:]):
        m = j - i
        radius = math.exp((logs[i] - logs[j]) / m)
        for t in range(m):
            angle = 2.0 * math.pi * t / m + 2.0 * math.pi * i / n + offset
            guesses.append(radius * complex(math.cos(angle), math.sin(angle)))
    # 首项系数在双精度下下溢时，补足到 n 个初值
    outer = 2.0 * max((abs(g) for g in guesses), default=1.0)
    while len(guesses) < n:
        angle = 2.0 * math.pi * len(guesses) / n + offset
        guesses.append(outer * complex(math.cos(angle), math.sin(angle)))
    return np.array(guesses, dtype=complex)


def _aberth_double(coeffs: np.ndarray, z: np.ndarray, max_iter: int):
    """双精度向量化 Aberth 迭代，返回 (根, 迭代次数, 是否全部收敛)"""
    eps = np.finfo(float).eps
    rev = coeffs[::-1]
    drev = np.polyder(rev)
    absrev = np.abs(rev)
    n = len(z)
    done = np.zeros(n, dtype=bool)
    it = 0
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(~done)
        if len(idx) == 0:
            break
        za = z[idx]
        pv = np.polyval(rev, za)
        dpv = np.polyval(drev, za)
        diff = za[:, None] - z[None, :]
        diff[np.arange(len(idx)), idx] = 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / diff
            inv[np.arange(len(idx)), idx] = 0.0
            inv[~np.isfinite(inv)] = 0.0
            s = inv.sum(axis=1)
            w = pv / dpv
            corr = w / (1.0 - w * s)
        bad = ~np.isfinite(corr)
        corr[bad] = 1e-8 * (1.0 + np.abs(za[bad]))
        z[idx] = za - corr
        small = np.abs(corr) <= 4.0 * eps * np.abs(z[idx])
        tiny = np.abs(pv) <= 4.0 * n * eps * np.polyval(absrev, np.abs(za))
        done[idx] = small | tiny
    return z, it, bool(done.all())


def _horner_with_derivative(coeffs: list, z):
    p = coeffs[-1]
    dp = 0
    for c in reversed(coeffs[:-1]):
        dp = dp * z + p
        p = p * z + c
    return p, dp


def _aberth_polish(coeffs: list, z: list, arith: Arithmetic, max_iter: int):
    """
    扩展精度下的 Aberth 修正

    每个根在修正量达到工作精度、或 |p(z)| 落入舍入误差范围后停止更新。

    Returns:
        (根, 迭代次数, 是否全部收敛)
    """
    n = len(z)
    tol = 16 * arith.eps
    noise = 4 * n * arith.eps
    abs_coeffs = [abs(c) for c in coeffs]
    done = [False] * n
    it = 0
    while it < max_iter and not all(done):
        it += 1
        new = list(z)
        for j in range(n):
            if done[j]:
                continue
            p, dp = _horner_with_derivative(coeffs, z[j])
            mag, _ = _horner_with_derivative(abs_coeffs, abs(z[j]))
            if abs(p) <= noise * mag:
                done[j] = True
                continue
            if dp == 0:
                continue
            w = p / dp
            s = 0
            for k in range(n):
                if k != j and z[j] != z[k]:
                    s += 1 / (z[j] - z[k])
            corr = w / (1 - w * s)
            new[j] = z[j] - corr
            done[j] = float(abs(corr)) <= tol * max(float(abs(z[j])), 1e-300)
        z = new
    return z, it, all(done)


def _cluster(values: List[complex], bounds: List[float]) -> List[int]:
    """误差圆盘相交的根合并为一簇，返回每个根所在簇的大小"""
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= bounds[i] + bounds[j]:
                parent[find(i)] = find(j)
    roots = [find(i) for i in range(n)]
    return [roots.count(r) for r in roots]


def find_roots(poly: UnivariatePoly, arith: Optional[Arithmetic] = None, max_iter: int = 300,
               polish_iter: int = 100) -> RootSet:
    """
    同时求出一元多项式的全部复根及其误差界

    先用双精度 Aberth 迭代得到近似根，扩展精度时再用工作精度抛光；
    两个阶段都收敛才算收敛。
    误差界取 n(|p(z)| + 舍入误差)/|p'(z)|，误差圆盘相交的根视为重根簇。

    Args:
        poly: 多项式（首项系数非零）
        arith: 求根使用的精度后端，缺省为多项式自身的后端

    Returns:
        RootSet，根的个数等于次数

    Raises:
        ValueError: 次数小于 1
    """
    arith = arith or poly.arith
    coeffs = [arith.complex(c) for c in poly.coeffs]
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    if len(coeffs) < 2:
        raise ValueError("多项式次数至少为 1")

    zero_roots = 0
    while coeffs[0] == 0:
        coeffs.pop(0)
        zero_roots += 1
    roots = [Root(arith.complex(0), 0.0) for _ in range(zero_roots)]
    n = len(coeffs) - 1
    if n == 0:
        return RootSet(roots)

    scale = max(abs(c) for c in coeffs)
    coeffs = [c / scale for c in coeffs]
    cd = np.array([complex(c) for c in coeffs])

    z0 = _newton_polygon_guesses(cd)
    z, iterations, converged = _aberth_double(cd, z0.copy(), max_iter)
    values = [arith.complex(v) for v in z]
    if arith.extended:
        values, extra, polished = _aberth_polish(coeffs, values, arith, polish_iter)
        iterations += extra
        converged = converged and polished

    bounds = []
    abs_coeffs = [abs(c) for c in coeffs]
    for v in values:
        p, dp = _horner_with_derivative(coeffs, v)
        mag, _ = _horner_with_derivative(abs_coeffs, abs(v))
        rounding = 4 * n * arith.eps * float(mag)
        bounds.append(float(n * (float(abs(p)) + rounding) / float(abs(dp))) if dp != 0 else math.inf)

    mult = _cluster([complex(v) for v in values], bounds)
    for v, b, m in zip(values, bounds, mult):
        ok = math.isfinite(b) and b <= 1e-6 * max(1.0, float(abs(v)))
        roots.append(Root(v, b, converged=ok or m > 1, multiplicity=m))
    if not converged:
        logger.warning("Aberth 迭代未完全收敛（次数 %d，共 %d 次迭代）", n, iterations)
    return RootSet(roots, iterations, converged)


def _log_abs(x) -> float:
    """log|x|，对扩展精度的极小值不下溢"""
    a = abs(x)
    if a == 0:
        return -math.inf
    if hasattr(a, "_mpf_"):
        return float(a.context.log(a))
    return math.log(a)


def _column_norm(column):
    total = 0
    for v in column:
        total = total + abs(v) ** 2
    return total ** 0.5


def is_real_positive(z, rho_min: float, imag_tol: float) -> bool:
    zc = complex(z)
    return abs(zc.imag) < imag_tol * max(1.0, abs(zc.real)) and zc.real > rho_min


def _near_real(z, rho_min: float, imag_tol: float, slack: float) -> bool:
    """虚部在误差界 slack 之内的正根"""
    zc = complex(z)
    return (math.isfinite(slack) and zc.real > rho_min
            and abs(zc.imag) <= slack + imag_tol * max(1.0, abs(zc.real)))


# ---------------------------------------------------------------------------
# Sylvester 结式
# ---------------------------------------------------------------------------

def sylvester_matrix(a: Sequence, b: Sequence, arith: Arithmetic) -> np.ndarray:
    """
    a(x) 次数 m、b(x) 次数 n 的 Sylvester 矩阵（(m+n)×(m+n)）

    前 n 列为 a 的系数（a_m 在第 c 行，a_0 在第 c+m 行），后 m 列为 b 的系数。
    """
    m, n = len(a) - 1, len(b) - 1
    size = m + n
    S = arith.zeros((size, size), complex_=True)
    for c in range(n):
        for j in range(m + 1):
            S[c + m - j, c] = a[j]
    for c in range(m):
        for j in range(n + 1):
            S[c + n - j, n + c] = b[j]
    return S


def lu_determinant(matrix: np.ndarray):
    """
    列主元 LU 分解求行列式

    Returns:
        (det, growth)，growth 为 U 中最大元与原矩阵最大元之比
    """
    rows = [list(r) for r in matrix]
    size = len(rows)
    start = max((abs(v) for r in rows for v in r), default=0)
    det = 1
    biggest = start
    for k in range(size):
        pivot = max(range(k, size), key=lambda i: abs(rows[i][k]))
        if rows[pivot][k] == 0:
            return rows[k][k] * 0, float(biggest / start) if start else 0.0
        if pivot != k:
            rows[k], rows[pivot] = rows[pivot], rows[k]
            det = -det
        pk = rows[k][k]
        det = det * pk
        for i in range(k + 1, size):
            f = rows[i][k] / pk
            if f == 0:
                continue
            ri, rk = rows[i], rows[k]
            for j in range(k + 1, size):
                ri[j] = ri[j] - f * rk[j]
                if abs(ri[j]) > biggest:
                    biggest = abs(ri[j])
    return det, float(biggest / start) if start else 0.0


@dataclass
class ResultantInfo:
    poly: UnivariatePoly
    pivot_growth: float
    tail: float
    formal_degree: int
    conic_degree: int


def resultant_rho1(system: BivariateSystem, arith: Optional[Arithmetic] = None, n_nodes: int = DFT_SIZE) -> ResultantInfo:
    """
    消去 ρ₁ 的结式 Res(ρ₂) = det S(ρ₂)

    在 n_nodes 个单位根上求 a_j(ρ₂)、b_j(ρ₂)，对每个点做 LU 行列式，再用 IDFT 插值。
    p、q 为实系数，共轭节点上的行列式取共轭，只需计算 n_nodes/2+1 个。

    Raises:
        DegenerateGeometryError: q 与 ρ₁ 无关
        ZeroResultantError: 结式恒为零（p 与 q 有公共因子）
    """
    arith = arith or system.arith
    p, conic = system.p, system.conic
    m = p.degree_in(0)
    if m < 1:
        raise DegenerateGeometryError("DegenerateConic", "p does not depend on rho1")
    if conic.q20 != 0:
        b_const = [conic.q20, conic.q10]
    elif conic.q10 != 0:
        b_const = [conic.q10]
    else:
        raise DegenerateGeometryError("DegenerateConic", "q does not depend on rho1")
    n = len(b_const)

    a_vals = [dft_evaluate(list(p.coeffs[j, :]), arith, n_nodes) for j in range(m + 1)]
    b0_vals = dft_evaluate([conic.q00, conic.q01, conic.q02], arith, n_nodes)
    b_high = [arith.complex(v) for v in b_const]

    values = [None] * n_nodes
    growth = 0.0
    log_hadamard = -math.inf
    for k in range(n_nodes // 2 + 1):
        a = [a_vals[j][k] for j in range(m + 1)]
        b = [b0_vals[k]] + list(reversed(b_high))
        S = sylvester_matrix(a, b, arith)
        det, g = lu_determinant(S)
        values[k] = det
        growth = max(growth, g)
        log_hadamard = max(log_hadamard, sum(_log_abs(_column_norm(S[:, c])) for c in range(S.shape[1])))
    for k in range(n_nodes // 2 + 1, n_nodes):
        values[k] = values[n_nodes - k].conjugate()

    log_max = max(_log_abs(v) for v in values)
    if log_max <= math.log(1e3 * arith.eps * max(growth, 1.0)) + log_hadamard:
        raise ZeroResultantError("resultant vanishes identically (p and q share a component)")

    raw = idft_interpolate(values, arith, n_nodes)
    coeffs = [arith.complex(c.real) for c in raw.coeffs]
    scale = max(abs(c) for c in coeffs)
    tail = float(max((abs(c) for c in coeffs[RESULTANT_DEGREE + 1:]), default=0) / scale)
    if tail > 1e-20:
        logger.debug("resultant interpolation tail %.3e above degree %d", tail, RESULTANT_DEGREE)
    poly = UnivariatePoly(coeffs[:RESULTANT_DEGREE + 1], arith).trim(1e3 * arith.eps)
    return ResultantInfo(poly, growth, tail, m, n)


# ---------------------------------------------------------------------------
# 候选解与二维牛顿抛光
# ---------------------------------------------------------------------------

@dataclass
class Candidate:
    rho1: float
    rho2: float
    engine: str
    p_residual: float = 0.0
    q_residual: float = 0.0
    error_bound: float = 0.0
    polished: bool = False

    def swapped(self) -> "Candidate":
        return Candidate(self.rho2, self.rho1, self.engine, self.p_residual, self.q_residual,
                         self.error_bound, self.polished)


def polish_pair(system: BivariateSystem, rho1, rho2, max_iter: int = 10):
    """
    在 {p = 0, q = 0} 上做二维牛顿迭代

    Returns:
        (rho1, rho2, polished)；迭代发散或移动过远时返回原值
    """
    arith = system.arith
    p, conic = system.p, system.conic
    dp1, dp2 = p.derivative(0), p.derivative(1)
    x, y = arith.real(rho1), arith.real(rho2)
    x0, y0 = x, y
    tol = arith.eps ** 0.75
    for _ in range(max_iter):
        fp = p.evaluate(x, y)
        fq = conic.evaluate(x, y)
        a, b = dp1.evaluate(x, y), dp2.evaluate(x, y)
        c, d = 2 * conic.q20 * x + conic.q10, 2 * conic.q02 * y + conic.q01
        det = a * d - b * c
        if det == 0:
            break
        dx = (-fp * d + fq * b) / det
        dy = (-a * fq + c * fp) / det
        x, y = x + dx, y + dy
        if abs(dx) + abs(dy) <= tol * (1 + abs(x) + abs(y)):
            break
    moved = float(abs(x - x0) + abs(y - y0))
    if not math.isfinite(moved) or moved > 1e-3 * (1.0 + float(abs(x0) + abs(y0))):
        return rho1, rho2, False
    return x, y, True


def _finish_candidate(system: BivariateSystem, rho1, rho2, engine: str, bound: float) -> Candidate:
    x, y, polished = polish_pair(system, rho1, rho2)
    p_res = float(abs(system.p.evaluate(x, y)) / max(float(system.p.magnitude(x, y)), 1e-300))
    q_res = float(abs(system.conic.evaluate(x, y))) / max(system.conic.scale(x, y), 1e-300)
    return Candidate(Arithmetic.to_float(x), Arithmetic.to_float(y), engine, p_res, q_res, bound, polished)


@dataclass
class EngineResult:
    candidates: List[Candidate]
    roots: Optional[RootSet] = None
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# DFT 结式引擎
# ---------------------------------------------------------------------------

def _rho1_from_conic(conic: ConicQ, r, arith: Arithmetic) -> list:
    """给定 ρ₂ 解 q(ρ₁, ρ₂) = 0，判别式的微小负值截为零"""
    b0 = conic.q02 * r * r + conic.q01 * r + conic.q00
    if conic.q20 == 0:
        return [-b0 / conic.q10] if conic.q10 != 0 else []
    disc = conic.q10 * conic.q10 - 4 * conic.q20 * b0
    if disc < 0:
        if abs(disc) > 1e-10 * (conic.q10 * conic.q10 + abs(4 * conic.q20 * b0)):
            return []
        disc = arith.real(0)
    s = arith.sqrt(disc)
    # 避免相消的求根公式
    t = -(conic.q10 + (s if conic.q10 >= 0 else -s)) / 2
    out = []
    if t != 0:
        out.append(t / conic.q20)
        out.append(b0 / t)
    else:
        out.append(arith.real(0))
    return out


def solve_system_dft(system: BivariateSystem, *, eliminate: str = "rho1", rho_min: float = 1e-4,
                     imag_tol: float = 1e-9, roots_arith: Optional[Arithmetic] = None,
                     n_nodes: int = DFT_SIZE) -> EngineResult:
    """
    DFT 结式引擎：Res(ρ₂) 的正实根逐个回代 q 求 ρ₁，取 |p| 较小的分支

    Args:
        system: build_p 构造的方程组
        eliminate: "rho1"（默认）或 "rho2"（交换变量后消元）
        rho_min: 接受的最小距离（AU）
        imag_tol: 实根判定的相对虚部阈值
        roots_arith: 求根精度后端

    Returns:
        EngineResult，候选为 (ρ₁, ρ₂) 正实数对
    """
    if eliminate not in ("rho1", "rho2"):
        raise ValueError("eliminate 只能是 rho1 或 rho2")
    work = system.transposed() if eliminate == "rho2" else system
    arith = work.arith
    info = resultant_rho1(work, arith, n_nodes)
    roots = find_roots(info.poly, roots_arith or arith)

    candidates = []
    for root in roots.roots:
        if not is_real_positive(root.value, rho_min, imag_tol):
            continue
        r = arith.real(root.value.real)
        branches = [x for x in _rho1_from_conic(work.conic, r, arith) if x > rho_min]
        if not branches:
            continue
        best = min(branches, key=lambda x: abs(work.p.evaluate(x, r)))
        cand = _finish_candidate(work, best, r, "dft", root.error_bound)
        candidates.append(cand.swapped() if eliminate == "rho2" else cand)

    diagnostics = {
        "eliminate": eliminate,
        "pivot_growth": info.pivot_growth,
        "interpolation_tail": info.tail,
        "resultant_degree": info.poly.degree,
        "roots_converged": roots.converged,
    }
    logger.debug("dft engine: %d candidates, %s", len(candidates), diagnostics)
    return EngineResult(candidates, roots, diagnostics)


# ---------------------------------------------------------------------------
# 正规形式引擎
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalFormTransform:
    """
    ρ₁ = σ₁ζ₁ + α，ρ₂ = σ₂ζ₂ + β，再旋转 π/4：ζ₁ = (ξ₁+ξ₂)/√2，ζ₂ = (ξ₂−ξ₁)/√2

    变换后 q = 2 q20 σ₁² (ξ₁ξ₂ − c★)
    """

    alpha: object
    beta: object
    gamma: object
    sigma1: object
    sigma2: object
    tau1: object
    tau2: object
    c_star: object
    kappa: object
    sqrt2: object

    def to_xi(self, rho1, rho2):
        z1 = (rho1 - self.alpha) / self.sigma1
        z2 = (rho2 - self.beta) / self.sigma2
        return (z1 - z2) / self.sqrt2, (z1 + z2) / self.sqrt2

    def to_rho(self, xi1, xi2):
        z1 = (xi1 + xi2) / self.sqrt2
        z2 = (xi2 - xi1) / self.sqrt2
        return self.sigma1 * z1 + self.alpha, self.sigma2 * z2 + self.beta


def normal_form_transform(conic: ConicQ, arith: Arithmetic, sigma2=1) -> NormalFormTransform:
    """
    Raises:
        DegenerateGeometryError: q20 或 q02 为零
    """
    q20, q10, q02, q01, q00 = (arith.complex(v) for v in
                               (conic.q20, conic.q10, conic.q02, conic.q01, conic.q00))
    if q20 == 0 or q02 == 0:
        raise DegenerateGeometryError("DegenerateConic", "normal form needs q20 != 0 and q02 != 0")
    alpha = -q10 / (2 * q20)
    beta = -q01 / (2 * q02)
    gamma = arith.csqrt(-q02 / q20)
    sigma2 = arith.complex(sigma2)
    sigma1 = gamma * sigma2
    kappa = q00 - q10 * q10 / (4 * q20) - q01 * q01 / (4 * q02)
    c_star = -kappa / (2 * q20 * sigma1 * sigma1)
    return NormalFormTransform(
        alpha=alpha, beta=beta, gamma=gamma, sigma1=sigma1, sigma2=sigma2,
        tau1=alpha / sigma1, tau2=beta / sigma2, c_star=c_star, kappa=kappa,
        sqrt2=arith.csqrt(2),
    )


def _shift_matrix(shift, size: int, arith: Arithmetic) -> np.ndarray:
    """M[i, h] = C(h, i) shift^(h−i)"""
    M = arith.zeros((size, size), complex_=True)
    powers = [arith.complex(1)]
    for _ in range(size):
        powers.append(powers[-1] * shift)
    for h in range(size):
        for i in range(h + 1):
            M[i, h] = math.comb(h, i) * powers[h - i]
    return M


def normal_form_coefficients(system: BivariateSystem, T: NormalFormTransform, arith: Arithmetic):
    """
    p̃ = diag(σ₁^i) Mα P Mβᵀ diag(σ₂^j)，旋转后得 p★，再用 ξ₁ξ₂ = c★ 约化为 A_j、B_j

    Returns:
        (p_star, A, B)，A[0] 恒为零
    """
    P = np.vectorize(arith.complex, otypes=[object])(system.p.coeffs)
    size = max(P.shape)
    if P.shape != (size, size):
        padded = arith.zeros((size, size), complex_=True)
        padded[: P.shape[0], : P.shape[1]] = P
        P = padded
    total = system.p.total_degree()

    Ma = _shift_matrix(T.alpha, size, arith)
    Mb = _shift_matrix(T.beta, size, arith)
    p_tilde = Ma.dot(P).dot(Mb.T)
    s1 = [arith.complex(1)]
    s2 = [arith.complex(1)]
    for _ in range(size):
        s1.append(s1[-1] * T.sigma1)
        s2.append(s2[-1] * T.sigma2)
    for i in range(size):
        for j in range(size):
            p_tilde[i, j] = p_tilde[i, j] * s1[i] * s2[j]

    inv_sqrt2 = 1 / T.sqrt2
    half_powers = [arith.complex(1)]
    for _ in range(total + 1):
        half_powers.append(half_powers[-1] * inv_sqrt2)

    p_star = arith.zeros((total + 1, total + 1), complex_=True)
    for h in range(size):
        for k in range(size):
            m = h + k
            if m > total or p_tilde[h, k] == 0:
                continue
            plus = [math.comb(h, a) for a in range(h + 1)]
            minus = [math.comb(k, b) * (-1) ** b for b in range(k + 1)]
            conv = np.convolve(plus, minus)
            factor = p_tilde[h, k] * half_powers[m]
            for nn in range(m + 1):
                if conv[nn]:
                    p_star[nn, m - nn] += factor * int(conv[nn])

    c = T.c_star
    c_pow = [arith.complex(1)]
    for _ in range(total + 1):
        c_pow.append(c_pow[-1] * c)
    A = [arith.complex(0)] * (total + 1)
    B = [arith.complex(0)] * (total + 1)
    for j in range(1, total + 1):
        A[j] = sum((p_star[h, h - j] * c_pow[h - j] for h in range(j, total + 1)), arith.complex(0))
    for j in range(total + 1):
        B[j] = sum((p_star[k - j, k] * c_pow[k - j] for k in range(j, total + 1)), arith.complex(0))
    return p_star, A, B


def solve_system_normal_form(system: BivariateSystem, *, rho_min: float = 1e-4, imag_tol: float = 1e-9,
                             arith: Optional[Arithmetic] = None, roots_arith: Optional[Arithmetic] = None,
                             sigma2=None) -> EngineResult:
    """
    正规形式引擎：c★ ≠ 0 时求 48 次 𝔭(ξ₂)，ξ₁ = c★/ξ₂；c★ = 0 时分别求 (ξ₁, 0) 与 (0, ξ₂) 两个 24 次多项式

    二次曲线的中心 (α, β) 可能远离 ρ 的物理范围，此时 𝔭 在实根附近高度相消，
    所以求根默认使用与变换相同的精度。sigma2 缺省时取使 |c★| = 1 的值。

    Raises:
        DegenerateGeometryError: q20 或 q02 为零
    """
    arith = arith or system.arith
    roots_arith = roots_arith or arith
    T = normal_form_transform(system.conic, arith, 1 if sigma2 is None else sigma2)

    q_scale = sum(float(abs(arith.complex(v))) for v in
                  (system.conic.q00, system.conic.q10 ** 2 / (4 * system.conic.q20),
                   system.conic.q01 ** 2 / (4 * system.conic.q02)))
    degenerate_c = float(abs(T.kappa)) <= 1e3 * arith.eps * q_scale
    if sigma2 is None and not degenerate_c:
        T = normal_form_transform(system.conic, arith, arith.csqrt(abs(T.c_star)))
    _, A, B = normal_form_coefficients(system, T, arith)
    total = len(B) - 1

    pairs = []
    root_sets = []
    if not degenerate_c:
        c = T.c_star
        frak = []
        for k in range(2 * total + 1):
            if k < total:
                frak.append(A[total - k] * c ** (total - k))
            else:
                frak.append(B[k - total])
        rs = find_roots(UnivariatePoly(frak, arith).trim(0.0), roots_arith)
        root_sets.append(rs)
        for root in rs.roots:
            if root.value == 0:
                continue
            xi2 = arith.complex(root.value)
            # dρ/dξ₂ 沿 ξ₁ = c★/ξ₂ 的模
            gain = float(abs(T.sigma1) + abs(T.sigma2)) * (1.0 + float(abs(c / (xi2 * xi2))))
            pairs.append((c / xi2, xi2, root.error_bound * gain))
    else:
        logger.debug("c_star = 0: solving the two degree-%d factors", total)
        rs1 = find_roots(UnivariatePoly([B[0]] + A[1:], arith).trim(0.0), roots_arith)
        rs2 = find_roots(UnivariatePoly(list(B), arith).trim(0.0), roots_arith)
        root_sets += [rs1, rs2]
        gain = float(abs(T.sigma1) + abs(T.sigma2))
        pairs += [(arith.complex(r.value), arith.complex(0), r.error_bound * gain) for r in rs1.roots]
        pairs += [(arith.complex(0), arith.complex(r.value), r.error_bound * gain) for r in rs2.roots]

    base = system.arith
    candidates = []
    for xi1, xi2, bound in pairs:
        r1, r2 = T.to_rho(xi1, xi2)
        exact = is_real_positive(r1, rho_min, imag_tol) and is_real_positive(r2, rho_min, imag_tol)
        if not exact and not (_near_real(r1, rho_min, imag_tol, bound) and _near_real(r2, rho_min, imag_tol, bound)):
            continue
        cand = _finish_candidate(system, base.real(r1.real), base.real(r2.real), "normal_form", bound)
        if not exact:
            # 误差圆盘跨过实轴的根，只有抛光收敛且不与已有候选重合才保留
            if not cand.polished or any(
                abs(cand.rho1 - o.rho1) + abs(cand.rho2 - o.rho2) < 1e-10 * (1.0 + abs(o.rho1) + abs(o.rho2))
                for o in candidates
            ):
                continue
        candidates.append(cand)

    diagnostics = {
        "c_star": Arithmetic.to_float(T.c_star),
        "sigma2": Arithmetic.to_float(T.sigma2),
        "gamma_complex": bool(abs(complex(T.gamma).imag) > 0),
        "roots_converged": all(rs.converged for rs in root_sets),
    }
    logger.debug("normal form engine: %d candidates, %s", len(candidates), diagnostics)
    return EngineResult(candidates, root_sets[0] if root_sets else None, diagnostics)


__all__ = [
    "UnivariatePoly", "Root", "RootSet", "Candidate", "EngineResult", "ResultantInfo", "NormalFormTransform",
    "dft_evaluate", "idft_interpolate", "find_roots", "sylvester_matrix", "lu_determinant", "resultant_rho1",
    "solve_system_dft", "solve_system_normal_form", "normal_form_transform", "normal_form_coefficients",
    "polish_pair", "is_real_positive", "DFT_SIZE",
]
