"""
配置模块
负责环境变量读取、键值配置文件解析和常量定义
"""

import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict

from dotenv import dotenv_values, load_dotenv

try:
    from .core import ConfigError
except ImportError:
    from core import ConfigError

# 加载环境变量
load_dotenv()


def _as_bool(raw: str) -> bool:
    return str(raw).strip().lower() in ("1", "true", "yes", "on")


def _as_table(raw: str) -> tuple:
    """解析 "dt:dmax,dt:dmax" 形式的分段线性表"""
    raw = str(raw).strip()
    if not raw:
        return ()
    points = []
    for item in raw.split(","):
        dt, dmax = item.split(":")
        points.append((float(dt), float(dmax)))
    return tuple(sorted(points))


# 配置键 -> 类型转换（键名前缀即所属分节）
_FIELDS: Dict[str, Callable[[str], Any]] = {
    "DATA_DIR": str,
    "STATIONS_FILE": str,
    "EXAMPLES_DIR": str,
    "OUTPUT_DIR": str,
    "EPHEMERIS_FILE": str,
    "LOG_LEVEL": str,
    "WORKERS": int,
    # 精度
    "PRECISION_TIER": str,
    "XSCALAR_BITS": int,
    "NORMAL_FORM_BITS": int,
    "RESULTANT_PRECISION": str,
    "NORMAL_FORM_PRECISION": str,
    "ROOTS_PRECISION": str,
    # 关联
    "LINKAGE_ENGINE": str,
    "LINKAGE_ELIMINATE": str,
    "LINKAGE_RHO_MIN": float,
    "LINKAGE_NEAR_ZERO_RHO": float,
    "LINKAGE_IMAG_TOL": float,
    "LINKAGE_SPURIOUS_TOL": float,
    "LINKAGE_CONIC_TOL": float,
    "LINKAGE_CHI_MAX": float,
    "LINKAGE_DEDUP_TOL": float,
    # 滤波器
    "FILTER_DT_MIN": float,
    "FILTER_DT_MAX": float,
    "FILTER_D_MAX": float,
    "FILTER_D_MAX_TABLE": _as_table,
    "FILTER_Q_MAX": float,
    "FILTER_CURV_MAX": float,
    # 模拟巡天
    "SIM_N_OBJECTS": int,
    "SIM_NEO_FRACTION": float,
    "SIM_NOISE_ARCSEC": float,
    "SIM_OBS_PER_TRACKLET": int,
    "SIM_NIGHTS": str,
    "SIM_STATION": str,
    "SIM_START_MJD": float,
    "SIM_FALSE_RATE": float,
    "SIM_MIN_ELONGATION": float,
    "ATTRIBUTABLE_DEGREE": int,
    "EPHEMERIS_LUNAR_OFFSET": _as_bool,
}


def _env(key: str, default: Any) -> Any:
    raw = os.getenv(key)
    if raw is None or raw == "":
        return default
    try:
        return _FIELDS[key](raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"环境变量 {key}={raw!r} 无法解析: {e}")


class Config:
    """系统配置类"""

    # 项目根目录
    PROJECT_ROOT = Path(__file__).parent.parent

    # 路径配置
    DATA_DIR = _env("DATA_DIR", "data")
    STATIONS_FILE = _env("STATIONS_FILE", "data/stations.txt")
    EXAMPLES_DIR = _env("EXAMPLES_DIR", "data/examples")
    OUTPUT_DIR = _env("OUTPUT_DIR", "output")
    EPHEMERIS_FILE = _env("EPHEMERIS_FILE", "")  # 为空时使用内置解析地球星历

    LOG_LEVEL = _env("LOG_LEVEL", "INFO")
    WORKERS = _env("WORKERS", 1)

    # 精度配置（standard | extended）
    PRECISION_TIER = _env("PRECISION_TIER", "extended")
    XSCALAR_BITS = _env("XSCALAR_BITS", 128)
    NORMAL_FORM_BITS = _env("NORMAL_FORM_BITS", 256)  # 正规形式需要比结式更高的精度
    RESULTANT_PRECISION = _env("RESULTANT_PRECISION", "extended")
    NORMAL_FORM_PRECISION = _env("NORMAL_FORM_PRECISION", "extended")
    ROOTS_PRECISION = _env("ROOTS_PRECISION", "extended")

    # 关联配置
    LINKAGE_ENGINE = _env("LINKAGE_ENGINE", "dft")  # dft | normal_form | both
    LINKAGE_ELIMINATE = _env("LINKAGE_ELIMINATE", "rho1")
    LINKAGE_RHO_MIN = _env("LINKAGE_RHO_MIN", 1e-4)  # AU
    LINKAGE_NEAR_ZERO_RHO = _env("LINKAGE_NEAR_ZERO_RHO", 0.01)  # AU，两个距离同时低于此值视为地心解
    LINKAGE_IMAG_TOL = _env("LINKAGE_IMAG_TOL", 1e-9)
    LINKAGE_SPURIOUS_TOL = _env("LINKAGE_SPURIOUS_TOL", 1e-6)
    LINKAGE_CONIC_TOL = _env("LINKAGE_CONIC_TOL", 1e-8)  # q 的相对残差
    LINKAGE_CHI_MAX = _env("LINKAGE_CHI_MAX", 10.0)
    LINKAGE_DEDUP_TOL = _env("LINKAGE_DEDUP_TOL", 1e-6)  # AU

    # 滤波器配置
    FILTER_DT_MIN = _env("FILTER_DT_MIN", 0.5)  # 天
    FILTER_DT_MAX = _env("FILTER_DT_MAX", 99.0)  # 天
    FILTER_D_MAX = _env("FILTER_D_MAX", 0.05)  # rad
    FILTER_D_MAX_TABLE = _env("FILTER_D_MAX_TABLE", ())
    FILTER_Q_MAX = _env("FILTER_Q_MAX", 5e4)
    FILTER_CURV_MAX = _env("FILTER_CURV_MAX", 1e-3)  # rad/day^2

    # 模拟巡天配置
    SIM_N_OBJECTS = _env("SIM_N_OBJECTS", 200)
    SIM_NEO_FRACTION = _env("SIM_NEO_FRACTION", 0.1)
    SIM_NOISE_ARCSEC = _env("SIM_NOISE_ARCSEC", 0.01)
    SIM_OBS_PER_TRACKLET = _env("SIM_OBS_PER_TRACKLET", 3)
    SIM_NIGHTS = _env("SIM_NIGHTS", "0,10")
    SIM_STATION = _env("SIM_STATION", "F51")
    SIM_START_MJD = _env("SIM_START_MJD", 54000.0)
    SIM_FALSE_RATE = _env("SIM_FALSE_RATE", 0.0)
    SIM_MIN_ELONGATION = _env("SIM_MIN_ELONGATION", 60.0)  # 度

    ATTRIBUTABLE_DEGREE = _env("ATTRIBUTABLE_DEGREE", 2)
    EPHEMERIS_LUNAR_OFFSET = _env("EPHEMERIS_LUNAR_OFFSET", True)

    @classmethod
    def path(cls, name: str) -> Path:
        """把相对路径配置项解析到项目根目录下"""
        value = Path(getattr(cls, name))
        return value if value.is_absolute() else cls.PROJECT_ROOT / value

    @classmethod
    def load_file(cls, file_path: Path):
        """
        读取键值配置文件并覆盖当前配置

        Args:
            file_path: KEY=VALUE 格式的配置文件，键名带分节前缀

        Returns:
            配置类本身

        Raises:
            ConfigError: 文件不存在、键名未知或取值无法解析
        """
        file_path = Path(file_path)
        if not file_path.is_file():
            raise ConfigError(f"配置文件不存在: {file_path}")

        values = dotenv_values(file_path)
        for key, raw in values.items():
            if key not in _FIELDS:
                raise ConfigError(f"未知配置项 {key}（{file_path}）")
            if raw is None:
                raise ConfigError(f"配置项 {key} 缺少取值（{file_path}）")
            cls.set(key, raw)
        return cls

    @classmethod
    def set(cls, key: str, raw: Any):
        """按类型设置单个配置项（命令行覆盖也走这里）"""
        if key not in _FIELDS:
            raise ConfigError(f"未知配置项 {key}")
        try:
            value = raw if not isinstance(raw, str) else _FIELDS[key](raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"配置项 {key}={raw!r} 无法解析: {e}")
        setattr(cls, key, value)

    @classmethod
    def as_dict(cls) -> Dict[str, Any]:
        """当前生效的全部配置，写入每个输出文件"""
        out = {}
        for key in sorted(_FIELDS):
            value = getattr(cls, key)
            out[key] = list(map(list, value)) if key == "FILTER_D_MAX_TABLE" else value
        return out

    @classmethod
    def validate(cls):
        """验证配置是否完整"""
        tiers = ("standard", "extended")
        for key in ("PRECISION_TIER", "RESULTANT_PRECISION", "NORMAL_FORM_PRECISION", "ROOTS_PRECISION"):
            if getattr(cls, key) not in tiers:
                raise ConfigError(f"{key} 必须是 {tiers} 之一")
        if cls.XSCALAR_BITS < 100:
            raise ConfigError("XSCALAR_BITS 至少为 100（约 30 位有效数字）")
        if cls.NORMAL_FORM_BITS < cls.XSCALAR_BITS:
            raise ConfigError("NORMAL_FORM_BITS 不能低于 XSCALAR_BITS")
        if cls.LINKAGE_ENGINE not in ("dft", "normal_form", "both"):
            raise ConfigError("LINKAGE_ENGINE 必须是 dft、normal_form 或 both")
        if cls.LINKAGE_ELIMINATE not in ("rho1", "rho2"):
            raise ConfigError("LINKAGE_ELIMINATE 必须是 rho1 或 rho2")
        if cls.LINKAGE_RHO_MIN <= 0:
            raise ConfigError("LINKAGE_RHO_MIN 必须为正")
        if cls.LINKAGE_CHI_MAX <= 0:
            raise ConfigError("LINKAGE_CHI_MAX 必须为正")
        if not 0 < cls.FILTER_DT_MIN < cls.FILTER_DT_MAX:
            raise ConfigError("需要 0 < FILTER_DT_MIN < FILTER_DT_MAX")
        if min(cls.FILTER_D_MAX, cls.FILTER_Q_MAX, cls.FILTER_CURV_MAX) <= 0:
            raise ConfigError("滤波阈值必须为正")
        if cls.WORKERS < 1:
            raise ConfigError("WORKERS 至少为 1")
        if cls.SIM_NOISE_ARCSEC <= 0:
            raise ConfigError("SIM_NOISE_ARCSEC 必须为正")
        if cls.ATTRIBUTABLE_DEGREE not in (1, 2):
            raise ConfigError("ATTRIBUTABLE_DEGREE 只能是 1 或 2")

        # 确保输出目录存在
        cls.path("OUTPUT_DIR").mkdir(parents=True, exist_ok=True)

        return True


def get_config() -> Config:
    """获取配置对象"""
    return Config


def setup_logging(level: str = None):
    """配置根日志记录器：单个流处理器，统一格式"""
    level = (level or Config.LOG_LEVEL).upper()
    root = logging.getLogger()
    root.handlers.clear()
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(getattr(logging, level, logging.INFO))


if __name__ == "__main__":
    # 测试配置
    config = get_config()
    print(f"项目根目录: {config.PROJECT_ROOT}")
    print(f"测站文件: {config.path('STATIONS_FILE')}")
    print(f"消元引擎: {config.LINKAGE_ENGINE}")
    print(f"扩展精度: {config.XSCALAR_BITS} bits")

    try:
        config.validate()
        print("\n✓ 配置验证通过")
    except ConfigError as e:
        print(f"\n✗ 配置验证失败: {e}")
