"""
可归属量模块
短弧观测的多项式拟合与观测者状态插值
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

try:
    from .core import ARCSEC, InsufficientObservationsError, normalize_angle
    from .ephemeris import EphemerisProvider
except ImportError:
    from core import ARCSEC, InsufficientObservationsError, normalize_angle
    from ephemeris import EphemerisProvider

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Observation:
    """
    单次天体测量观测

    sigma_alpha 是天球上的弧长误差（即 α cos δ 方向），拟合时换算为 σ_α / cos δ。
    """

    time: float
    alpha: float
    delta: float
    sigma_alpha: float
    sigma_delta: float
    station: str = "500"
    tracklet_id: str = ""

    def __post_init__(self):
        if not abs(self.delta) < math.pi / 2:
            raise ValueError(f"赤纬超出范围: {self.delta}")
        if not (self.sigma_alpha > 0 and self.sigma_delta > 0):
            raise ValueError("观测误差必须为正")


@dataclass
class Attributable:
    """(α, δ, α̇, δ̇) 于平均时刻 t̄，附协方差与观测者状态"""

    alpha: float
    delta: float
    alpha_dot: float
    delta_dot: float
    epoch: float
    gamma: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))
    q_obs: Optional[np.ndarray] = None
    q_dot_obs: Optional[np.ndarray] = None
    station: str = "500"
    id: str = ""
    n_obs: int = 0

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.delta, self.alpha_dot, self.delta_dot])

    @property
    def has_observer(self) -> bool:
        return self.q_obs is not None and self.q_dot_obs is not None

    def with_values(self, values: Sequence[float]) -> "Attributable":
        """替换四个角度分量，其他字段不变（有限差分和蒙特卡洛用）"""
        a = Attributable(*(float(v) for v in values), epoch=self.epoch, gamma=self.gamma,
                         q_obs=self.q_obs, q_dot_obs=self.q_dot_obs, station=self.station,
                         id=self.id, n_obs=self.n_obs)
        return a

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "station": self.station,
            "epoch": self.epoch,
            "n_obs": self.n_obs,
            "alpha_deg": math.degrees(self.alpha),
            "delta_deg": math.degrees(self.delta),
            "alpha_dot_deg_day": math.degrees(self.alpha_dot),
            "delta_dot_deg_day": math.degrees(self.delta_dot),
            "gamma": np.asarray(self.gamma, dtype=float).tolist(),
            "q_obs": None if self.q_obs is None else np.asarray(self.q_obs).tolist(),
            "q_dot_obs": None if self.q_dot_obs is None else np.asarray(self.q_dot_obs).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Attributable":
        """to_dict 的逆；gamma 缺省时为零矩阵"""
        gamma = np.asarray(data.get("gamma") or np.zeros((4, 4)), dtype=float)
        q = data.get("q_obs")
        q_dot = data.get("q_dot_obs")
        return cls(
            alpha=math.radians(float(data["alpha_deg"])),
            delta=math.radians(float(data["delta_deg"])),
            alpha_dot=math.radians(float(data["alpha_dot_deg_day"])),
            delta_dot=math.radians(float(data["delta_dot_deg_day"])),
            epoch=float(data["epoch"]),
            gamma=gamma.reshape(4, 4),
            q_obs=None if q is None else np.asarray(q, dtype=float),
            q_dot_obs=None if q_dot is None else np.asarray(q_dot, dtype=float),
            station=str(data.get("station", "500")),
            id=str(data.get("id", "")),
            n_obs=int(data.get("n_obs", 0)),
        )


def _weighted_polyfit(tau: np.ndarray, y: np.ndarray, sigma: np.ndarray, degree: int):
    """加权最小二乘，返回升幂系数及其协方差"""
    X = np.vander(tau, degree + 1, increasing=True)
    w = 1.0 / sigma ** 2
    normal = X.T @ (w[:, None] * X)
    try:
        factor = linalg.cho_factor(normal)
    except linalg.LinAlgError:
        raise InsufficientObservationsError("法方程奇异（观测时刻重合）")
    coeffs = linalg.cho_solve(factor, X.T @ (w * y))
    cov = linalg.cho_solve(factor, np.eye(degree + 1))
    return coeffs, cov


def fit_attributable(obs: List[Observation], degree: int = 2,
                     eph: Optional[EphemerisProvider] = None) -> Attributable:
    """
    由同一测站的短弧观测拟合可归属量

    Args:
        obs: 观测列表（同一测站）
        degree: 多项式次数，1 或 2
        eph: 可选星历；给出时同时插值观测者状态

    Returns:
        Attributable，epoch 为观测时刻的平均值

    Raises:
        InsufficientObservationsError: 观测数不足或时刻全部相同
    """
    if degree not in (1, 2):
        raise ValueError("degree 只能是 1 或 2")
    if len(obs) < degree + 1:
        raise InsufficientObservationsError(
            f"insufficient observations: {len(obs)} 个观测不足以做 {degree} 次拟合"
        )
    stations = {o.station for o in obs}
    if len(stations) != 1:
        raise ValueError(f"可归属量的观测必须来自同一测站: {sorted(stations)}")

    t = np.array([o.time for o in obs])
    if np.ptp(t) <= 0:
        raise InsufficientObservationsError("singular normal matrix: 观测时刻全部相同")
    if len(np.unique(t)) < degree + 1:
        raise InsufficientObservationsError(f"insufficient observations: 不同时刻少于 {degree + 1} 个")

    t_bar = float(t.mean())
    tau = t - t_bar
    alpha = np.unwrap(np.array([o.alpha for o in obs]))
    delta = np.array([o.delta for o in obs])
    sig_a = np.array([o.sigma_alpha / math.cos(o.delta) for o in obs])
    sig_d = np.array([o.sigma_delta for o in obs])

    ca, cov_a = _weighted_polyfit(tau, alpha, sig_a, degree)
    cd, cov_d = _weighted_polyfit(tau, delta, sig_d, degree)

    gamma = np.zeros((4, 4))
    gamma[np.ix_([0, 2], [0, 2])] = cov_a[:2, :2]
    gamma[np.ix_([1, 3], [1, 3])] = cov_d[:2, :2]

    result = Attributable(
        alpha=normalize_angle(ca[0]),
        delta=float(cd[0]),
        alpha_dot=float(ca[1]),
        delta_dot=float(cd[1]),
        epoch=t_bar,
        gamma=gamma,
        station=obs[0].station,
        id=obs[0].tracklet_id,
        n_obs=len(obs),
    )
    if eph is not None:
        result.q_obs, result.q_dot_obs = interpolate_observer(obs, eph, t_bar)
    return result


def interpolate_observer(obs: List[Observation], eph: EphemerisProvider,
                         t_bar: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    按观测时刻的测站地心位置拟合二次多项式，在 t̄ 处取值和导数，再加上地心日心状态

    只有两个不同时刻时退化为线性插值。
    """
    times = np.unique([o.time for o in obs])
    if len(times) < 2:
        raise InsufficientObservationsError("degenerate time distribution: 只有一个观测时刻")
    station = obs[0].station
    degree = 2
    if len(times) == 2:
        logger.warning("tracklet %s 只有两个观测时刻，观测者位置改用线性插值", obs[0].tracklet_id or "?")
        degree = 1

    offsets = np.array([eph.station_geocentric(station, ti) for ti in times])
    tau = times - t_bar
    coeffs = np.polynomial.polynomial.polyfit(tau, offsets, degree)
    geo_pos = coeffs[0]
    geo_vel = coeffs[1]

    earth_r, earth_v = eph.earth_heliocentric(t_bar)
    return earth_r + geo_pos, earth_v + geo_vel


def attributable_from_tracklet(obs: List[Observation], eph: EphemerisProvider,
                               degree: int = 2) -> Attributable:
    """拟合可归属量并插值观测者状态；观测不足二次拟合时自动降为一次"""
    if degree == 2 and len({o.time for o in obs}) == 2:
        degree = 1
    return fit_attributable(obs, degree, eph)


def attach_observer(A: Attributable, eph: EphemerisProvider) -> Attributable:
    """
    只有可归属量而没有原始观测时补上观测者状态

    没有观测时刻就无法重做测站位置的二次拟合，这里取
    q = q_⊕(t̄) + 测站地心位置(t̄)，q̇ = q̇_⊕(t̄)，不含测站自转速度。
    已带观测者状态的可归属量原样返回。
    """
    if A.has_observer:
        return A
    earth_r, earth_v = eph.earth_heliocentric(A.epoch)
    q = earth_r + eph.station_geocentric(A.station, A.epoch)
    return replace(A, q_obs=q, q_dot_obs=np.array(earth_v, dtype=float))


def observations_sigma(arcsec: float) -> float:
    """角秒 -> 弧度"""
    return arcsec * ARCSEC


__all__ = [
    "Observation", "Attributable", "fit_attributable", "interpolate_observer",
    "attributable_from_tracklet", "attach_observer", "observations_sigma",
]
