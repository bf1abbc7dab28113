"""
配对筛选模块
时间跨度、大圆度量与对称二次最小二乘拟合三级筛选
"""

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

try:
    from .attributable import Attributable
    from .config import Config
    from .core import (
        ConfigError, InsufficientObservationsError, SingularCovarianceError, angular_separation,
        mobile_basis, proper_motion, rotation_z,
    )
except ImportError:
    from attributable import Attributable
    from config import Config
    from core import (
        ConfigError, InsufficientObservationsError, SingularCovarianceError, angular_separation,
        mobile_basis, proper_motion, rotation_z,
    )

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("id1", "id2", "dt", "d_metric", "sqrtQ", "curv", "passed")


@dataclass(frozen=True)
class FilterConfig:
    dt_min: float = 0.5
    dt_max: float = 99.0
    d_max: float = 0.05
    q_max: float = 5e4
    curv_max: float = 1e-3
    d_max_table: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        if not 0 < self.dt_min < self.dt_max:
            raise ConfigError("需要 0 < dt_min < dt_max")
        if min(self.d_max, self.q_max, self.curv_max) <= 0:
            raise ConfigError("滤波阈值必须为正")

    @classmethod
    def from_config(cls, config=Config) -> "FilterConfig":
        return cls(
            dt_min=config.FILTER_DT_MIN,
            dt_max=config.FILTER_DT_MAX,
            d_max=config.FILTER_D_MAX,
            q_max=config.FILTER_Q_MAX,
            curv_max=config.FILTER_CURV_MAX,
            d_max_table=tuple(map(tuple, config.FILTER_D_MAX_TABLE)),
        )

    def d_max_for(self, dt: float) -> float:
        """d_max(δt)：给定分段线性表时在表内插值，表外取端点值"""
        if not self.d_max_table:
            return self.d_max
        xs, ys = zip(*self.d_max_table)
        return float(np.interp(abs(dt), xs, ys))


@dataclass(frozen=True)
class QuadFit:
    """
    对称二次拟合结果

    x = (α_q, α̇_q, α̈_q, δ_q, δ̇_q, δ̈_q)，于 t̄ = (t̄₁ + t̄₂)/2
    """

    x: np.ndarray
    t_mean: float
    residuals: np.ndarray
    sqrt_q: float
    eta_q: float
    curvature_term: float


@dataclass
class FilterReport:
    id1: str
    id2: str
    dt: float
    d_metric: float = float("nan")
    sqrt_q: float = float("nan")
    curv: float = float("nan")
    passed: bool = False
    flags: List[str] = field(default_factory=list)

    def as_row(self) -> dict:
        return {
            "id1": self.id1,
            "id2": self.id2,
            "dt": round(self.dt, 8),
            "d_metric": self.d_metric,
            "sqrtQ": self.sqrt_q,
            "curv": self.curv,
            "passed": self.passed,
        }


def time_span_filter(t1: float, t2: float, cfg: FilterConfig) -> bool:
    """dt_min ≤ |t₂ − t₁| ≤ dt_max，两端闭区间"""
    return cfg.dt_min <= abs(t2 - t1) <= cfg.dt_max


def _predicted_direction(A: Attributable, dt: float) -> np.ndarray:
    """沿 A 的大圆以恒定自行推进 dt：R = V R_z(η dt) Vᵀ"""
    basis = mobile_basis(A.alpha, A.delta, A.alpha_dot, A.delta_dot)
    V = np.column_stack([basis.rho_hat, basis.v_hat, basis.n_hat])
    return V @ rotation_z(basis.eta * dt) @ V.T @ basis.rho_hat


def great_circle_metric(A1: Attributable, A2: Attributable) -> float:
    """
    d = min{∠(ρ̂₁₂, ρ̂₂), ∠(ρ̂₂₁, ρ̂₁)}

    任一自行为零时度量无定义，返回 nan。
    """
    if proper_motion(A1.alpha_dot, A1.delta_dot, A1.delta) == 0.0 or \
            proper_motion(A2.alpha_dot, A2.delta_dot, A2.delta) == 0.0:
        return float("nan")
    dt = A2.epoch - A1.epoch
    rho1 = mobile_basis(A1.alpha, A1.delta, A1.alpha_dot, A1.delta_dot).rho_hat
    rho2 = mobile_basis(A2.alpha, A2.delta, A2.alpha_dot, A2.delta_dot).rho_hat
    rho12 = _predicted_direction(A1, dt)
    rho21 = _predicted_direction(A2, -dt)
    return min(angular_separation(rho12, rho2), angular_separation(rho21, rho1))


def _design_block(tau: float) -> np.ndarray:
    half = 0.5 * tau * tau
    return np.array([
        [1.0, tau, half, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, tau, half],
        [0.0, 1.0, tau, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, tau],
    ])


def _inverse(gamma: np.ndarray) -> np.ndarray:
    try:
        factor = linalg.cho_factor(np.asarray(gamma, dtype=float))
    except linalg.LinAlgError:
        raise SingularCovarianceError("attributable covariance is not positive definite")
    return linalg.cho_solve(factor, np.eye(4))


def symmetric_lls_fit(A1: Attributable, gamma1: np.ndarray, A2: Attributable, gamma2: np.ndarray) -> QuadFit:
    """
    用两个可归属量拟合 α(t)、δ(t) 的二次多项式

    ξ = λ − Hx，W = diag(Γ₁⁻¹, Γ₂⁻¹)，Q = ξᵀWξ / 8。
    α₂ 先展开到与 α₁ 相差不超过 π。

    Raises:
        InsufficientObservationsError: 两个历元相同
        SingularCovarianceError: 协方差不可逆
    """
    if A1.epoch == A2.epoch:
        raise InsufficientObservationsError("singular normal matrix: 两个可归属量历元相同")
    t_mean = 0.5 * (A1.epoch + A2.epoch)
    alpha2 = A1.alpha + math.remainder(A2.alpha - A1.alpha, 2.0 * math.pi)
    lam = np.array([A1.alpha, A1.delta, A1.alpha_dot, A1.delta_dot,
                    alpha2, A2.delta, A2.alpha_dot, A2.delta_dot])
    H = np.vstack([_design_block(A1.epoch - t_mean), _design_block(A2.epoch - t_mean)])
    W = linalg.block_diag(_inverse(gamma1), _inverse(gamma2))

    C = H.T @ W @ H
    try:
        x = linalg.solve(C, H.T @ W @ lam, assume_a="pos")
    except linalg.LinAlgError:
        raise InsufficientObservationsError("singular normal matrix in symmetric fit")
    xi = lam - H @ x
    q = float(xi @ W @ xi) / 8.0

    a, a_dot, a_ddot, d, d_dot, d_ddot = x
    eta = math.sqrt(d_dot ** 2 + (a_dot * math.cos(d)) ** 2)
    if eta > 0:
        curv = ((d_ddot * a_dot - a_ddot * d_dot) * math.cos(d)
                + a_dot * (eta ** 2 + d_dot ** 2) * math.sin(d)) / eta
    else:
        curv = float("nan")
    return QuadFit(x, t_mean, xi, math.sqrt(max(q, 0.0)), eta, curv)


def filter_pair(A1: Attributable, A2: Attributable, cfg: FilterConfig) -> FilterReport:
    """依次执行三级筛选，返回报告行；度量无定义时放行并记标记"""
    dt = A2.epoch - A1.epoch
    report = FilterReport(A1.id, A2.id, dt)
    if not time_span_filter(A1.epoch, A2.epoch, cfg):
        report.flags.append("time span")
        return report

    report.d_metric = great_circle_metric(A1, A2)
    if math.isnan(report.d_metric):
        report.flags.append("metric undefined")
    elif report.d_metric > cfg.d_max_for(dt):
        report.flags.append("great circle")
        return report

    try:
        fit = symmetric_lls_fit(A1, A1.gamma, A2, A2.gamma)
    except SingularCovarianceError:
        report.flags.append("lls skipped")
        report.passed = True
        return report
    report.sqrt_q, report.curv = fit.sqrt_q, fit.curvature_term
    if fit.sqrt_q > cfg.q_max:
        report.flags.append("lls residual")
    elif not abs(fit.curvature_term) <= cfg.curv_max:
        report.flags.append("curvature")
    else:
        report.passed = True
    return report


def enumerate_pairs(attributables: Sequence[Attributable], cfg: FilterConfig) -> List[Tuple[int, int]]:
    """
    按历元排序后列出时间跨度落在 [dt_min, dt_max] 内的全部配对

    Returns:
        (i, j) 下标对，i 的历元不晚于 j，按 (i, j) 排序
    """
    order = sorted(range(len(attributables)), key=lambda k: (attributables[k].epoch, attributables[k].id))
    epochs = [attributables[k].epoch for k in order]
    pairs = []
    for pos, i in enumerate(order):
        lo = bisect.bisect_left(epochs, epochs[pos] + cfg.dt_min, lo=pos + 1)
        hi = bisect.bisect_right(epochs, epochs[pos] + cfg.dt_max, lo=pos + 1)
        for j in order[lo:hi]:
            pairs.append((i, j))
    pairs.sort()
    logger.debug("enumerated %d pairs from %d attributables", len(pairs), len(attributables))
    return pairs


def run_filters(attributables: Sequence[Attributable], cfg: FilterConfig,
                pairs: Optional[Sequence[Tuple[int, int]]] = None) -> List[FilterReport]:
    """对全部候选配对执行 filter_pair"""
    pairs = enumerate_pairs(attributables, cfg) if pairs is None else pairs
    return [filter_pair(attributables[i], attributables[j], cfg) for i, j in pairs]


__all__ = [
    "FilterConfig", "QuadFit", "FilterReport", "time_span_filter", "great_circle_metric",
    "symmetric_lls_fit", "filter_pair", "enumerate_pairs", "run_filters", "REPORT_COLUMNS",
]
