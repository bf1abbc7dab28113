"""
星历模块
地球日心状态（解析模型或插值表）与测站地心位置
"""

import abc
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

try:
    from .core import (
        AU_KM, EARTH_RADIUS_KM, J2000_MJD, MJD_TO_JD, InputParseError,
        ecliptic_to_equatorial,
    )
    from .elements import KeplerianElements, keplerian_to_cartesian
except ImportError:
    from core import (
        AU_KM, EARTH_RADIUS_KM, J2000_MJD, MJD_TO_JD, InputParseError,
        ecliptic_to_equatorial,
    )
    from elements import KeplerianElements, keplerian_to_cartesian

logger = logging.getLogger(__name__)

# 地球自转角速度（rad/day）
EARTH_ROTATION = 2.0 * math.pi * 1.00273781191135448
# 月地质量比
EARTH_MOON_MASS_RATIO = 81.30056

# 地月质心 J2000 平均根数及其世纪变率：a, e, I, L, 近日点经度, Ω（角度为度）
_EMB_ELEMENTS = (1.00000261, 0.01671123, -0.00001531, 100.46457166, 102.93768193, 0.0)
_EMB_RATES = (0.00000562, -0.00004392, -0.01294668, 35999.37244981, 0.32327364, 0.0)

GEOCENTER = "500"


def gmst(mjd: float) -> float:
    """格林尼治平恒星时（rad）"""
    deg = 280.46061837 + 360.98564736629 * (mjd + MJD_TO_JD - 2451545.0)
    return math.radians(math.fmod(deg, 360.0))


@dataclass(frozen=True)
class Station:
    """MPC 视差常数形式的测站"""

    code: str
    longitude: float  # 度，东经
    rho_cos: float  # ρ cos φ'，地球半径单位
    rho_sin: float  # ρ sin φ'
    name: str = ""

    def position(self, mjd: float) -> np.ndarray:
        """地心赤道坐标（AU）"""
        theta = gmst(mjd) + math.radians(self.longitude)
        scale = EARTH_RADIUS_KM / AU_KM
        return scale * np.array([
            self.rho_cos * math.cos(theta),
            self.rho_cos * math.sin(theta),
            self.rho_sin,
        ])

    def velocity(self, mjd: float) -> np.ndarray:
        p = self.position(mjd)
        return EARTH_ROTATION * np.array([-p[1], p[0], 0.0])


class StationCatalog:
    """测站表：code lon rho_cos rho_sin name"""

    def __init__(self, stations: Dict[str, Station] = None):
        self.stations = dict(stations or {})
        self.stations.setdefault(GEOCENTER, Station(GEOCENTER, 0.0, 0.0, 0.0, "Geocenter"))

    @classmethod
    def load(cls, file_path: Path) -> "StationCatalog":
        """
        读取测站文件

        Raises:
            InputParseError: 文件不存在或行格式错误
        """
        file_path = Path(file_path)
        if not file_path.is_file():
            raise InputParseError("测站文件不存在", str(file_path))
        stations = {}
        with open(file_path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(None, 4)
                if len(parts) < 4:
                    raise InputParseError("测站行至少需要 4 列", str(file_path), lineno)
                try:
                    lon, rc, rs = (float(x) for x in parts[1:4])
                except ValueError as e:
                    raise InputParseError(f"无法解析数值: {e}", str(file_path), lineno)
                name = parts[4] if len(parts) > 4 else ""
                stations[parts[0]] = Station(parts[0], lon, rc, rs, name)
        logger.debug("loaded %d stations from %s", len(stations), file_path)
        return cls(stations)

    def __contains__(self, code: str) -> bool:
        return code in self.stations

    def get(self, code: str) -> Station:
        try:
            return self.stations[code]
        except KeyError:
            raise InputParseError(f"未知测站代码 {code!r}")


class EphemerisProvider(abc.ABC):
    """地球日心状态 + 测站地心位置，赤道 J2000，AU 与 AU/day"""

    def __init__(self, stations: Optional[StationCatalog] = None):
        self.stations = stations or StationCatalog()

    @abc.abstractmethod
    def earth_heliocentric(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        ...

    def station_geocentric(self, station_id: str, t: float) -> np.ndarray:
        return self.stations.get(station_id).position(t)

    def station_geocentric_velocity(self, station_id: str, t: float) -> np.ndarray:
        return self.stations.get(station_id).velocity(t)


def _lunar_geocentric_ecliptic(mjd: float) -> np.ndarray:
    """低精度月球地心黄道坐标（AU），主要周期项"""
    T = (mjd - J2000_MJD) / 36525.0
    s = math.radians(218.3164477 + 481267.88123421 * T)
    D = math.radians(297.8501921 + 445267.1114034 * T)
    F = s - math.radians(125.04452 - 1934.136261 * T)
    M = math.radians(357.5256 + 35999.049 * T)
    l = math.radians(134.96292 + 477198.86753 * T)
    arcsec = math.pi / 648000.0
    r_km = (385000.0 - 20905.0 * math.cos(l) - 3699.0 * math.cos(2 * D - l)
            - 2956.0 * math.cos(2 * D) - 570.0 * math.cos(2 * l))
    lon = s + arcsec * (22640.0 * math.sin(l) + 769.0 * math.sin(2 * l)
                        - 4586.0 * math.sin(l - 2 * D) + 2370.0 * math.sin(2 * D)
                        - 668.0 * math.sin(M) - 412.0 * math.sin(2 * F))
    lat = arcsec * 18520.0 * math.sin(F + lon - s)
    r = r_km / AU_KM
    return r * np.array([math.cos(lon) * math.cos(lat), math.sin(lon) * math.cos(lat), math.sin(lat)])


class KeplerianEarthEphemeris(EphemerisProvider):
    """
    内置低精度地球星历：地月质心平均根数 + 可选月球偏移

    secular_rates 与 lunar_offset 都关闭时为严格的二体轨道，便于构造精确守恒的测试数据。
    """

    FD_STEP = 1e-3  # 天

    def __init__(self, stations: Optional[StationCatalog] = None, secular_rates: bool = True,
                 lunar_offset: bool = True):
        super().__init__(stations)
        self.secular_rates = secular_rates
        self.lunar_offset = lunar_offset
        a, e, inc, L, varpi, node = _EMB_ELEMENTS
        self._fixed = KeplerianElements(
            a=a, e=e, I=math.radians(inc), Omega=math.radians(node),
            omega=math.radians(varpi - node), ell=math.radians(L - varpi), epoch=J2000_MJD,
        )

    def _elements(self, t: float) -> KeplerianElements:
        T = (t - J2000_MJD) / 36525.0
        a, e, inc, L, varpi, node = (x + r * T for x, r in zip(_EMB_ELEMENTS, _EMB_RATES))
        return KeplerianElements(
            a=a, e=e, I=math.radians(inc), Omega=math.radians(node),
            omega=math.radians(varpi - node), ell=math.radians(L - varpi), epoch=t,
        )

    def _position_ecliptic(self, t: float) -> np.ndarray:
        r, _ = keplerian_to_cartesian(self._elements(t), t)
        if self.lunar_offset:
            r = r - _lunar_geocentric_ecliptic(t) / (1.0 + EARTH_MOON_MASS_RATIO)
        return r

    def earth_heliocentric(self, t: float):
        if not self.secular_rates and not self.lunar_offset:
            r, v = keplerian_to_cartesian(self._fixed, t)
        else:
            h = self.FD_STEP
            r = self._position_ecliptic(t)
            v = (self._position_ecliptic(t + h) - self._position_ecliptic(t - h)) / (2.0 * h)
        return ecliptic_to_equatorial(r), ecliptic_to_equatorial(v)


class TableEphemeris(EphemerisProvider):
    """
    星历表：每行 mjd x y z vx vy vz，头部 "# frame=EQUJ2000" 或 "# frame=ECLJ2000"，
    位置用三次 Hermite 插值（节点处同时匹配速度）
    """

    def __init__(self, file_path: Path, stations: Optional[StationCatalog] = None):
        super().__init__(stations)
        self.file_path = Path(file_path)
        self.frame = "EQUJ2000"
        if not self.file_path.is_file():
            raise InputParseError("星历文件不存在", str(self.file_path))
        with open(self.file_path, "r", encoding="utf-8") as f:
            for line in f:
                if line.startswith("#") and "frame=" in line:
                    self.frame = line.split("frame=", 1)[1].strip().upper()
        if self.frame not in ("EQUJ2000", "ECLJ2000"):
            raise InputParseError(f"不支持的参考系 {self.frame}", str(self.file_path))
        try:
            table = np.loadtxt(self.file_path, comments="#", ndmin=2)
        except ValueError as e:
            raise InputParseError(f"星历表格式错误: {e}", str(self.file_path))
        if table.shape[1] != 7 or table.shape[0] < 2:
            raise InputParseError("星历表需要至少两行、每行 7 列", str(self.file_path))
        table = table[np.argsort(table[:, 0])]
        if self.frame == "ECLJ2000":
            table[:, 1:4] = np.array([ecliptic_to_equatorial(row) for row in table[:, 1:4]])
            table[:, 4:7] = np.array([ecliptic_to_equatorial(row) for row in table[:, 4:7]])
        self.t_min, self.t_max = float(table[0, 0]), float(table[-1, 0])
        self._spline = CubicHermiteSpline(table[:, 0], table[:, 1:4], table[:, 4:7], axis=0)
        self._velocity = self._spline.derivative()
        logger.info("loaded ephemeris table %s (%d rows, %s)", self.file_path, len(table), self.frame)

    def earth_heliocentric(self, t: float):
        if not self.t_min <= t <= self.t_max:
            raise ValueError(f"MJD {t} 超出星历表范围 [{self.t_min}, {self.t_max}]")
        return np.asarray(self._spline(t), dtype=float), np.asarray(self._velocity(t), dtype=float)


def observer_state(eph: EphemerisProvider, station_id: str, t: float):
    """测站日心位置与速度（直接计算，不做插值）"""
    earth_r, earth_v = eph.earth_heliocentric(t)
    return (
        earth_r + eph.station_geocentric(station_id, t),
        earth_v + eph.station_geocentric_velocity(station_id, t),
    )


def default_ephemeris(stations_file: Optional[Path] = None, table_file: Optional[Path] = None,
                      lunar_offset: bool = True) -> EphemerisProvider:
    """按配置构造星历：有星历表时用表，否则用内置解析模型"""
    stations = StationCatalog.load(stations_file) if stations_file else StationCatalog()
    if table_file:
        return TableEphemeris(table_file, stations)
    return KeplerianEarthEphemeris(stations, lunar_offset=lunar_offset)


__all__ = [
    "EphemerisProvider", "KeplerianEarthEphemeris", "TableEphemeris", "Station", "StationCatalog",
    "observer_state", "default_ephemeris", "gmst", "GEOCENTER",
]
