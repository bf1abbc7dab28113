"""
共享 fixture：把 src 加入路径、隔离全局配置、构造合成可归属量对
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# 添加 src 目录到路径（与根目录脚本一致）
ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from config import Config  # noqa: E402
from ephemeris import KeplerianEarthEphemeris, StationCatalog  # noqa: E402
from elements import KeplerianElements  # noqa: E402
from linkage import LinkageConfig  # noqa: E402

from tests.oracles import synthetic_pair  # noqa: E402


@pytest.fixture(autouse=True)
def restore_config():
    """每个测试结束后恢复 Config 的类属性"""
    saved = {k: v for k, v in vars(Config).items() if k.isupper()}
    yield
    for key, value in saved.items():
        setattr(Config, key, value)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def exact_eph():
    """严格二体的地球轨道 + 随包测站表"""
    stations = StationCatalog.load(ROOT / "data" / "stations.txt")
    return KeplerianEarthEphemeris(stations, secular_rates=False, lunar_offset=False)


@pytest.fixture(scope="session")
def mb_orbit():
    return KeplerianElements(a=2.6, e=0.14, I=math.radians(8.0), Omega=1.1, omega=2.3, ell=0.4, epoch=54000.0)


@pytest.fixture(scope="session")
def mb_pair(exact_eph, mb_orbit):
    """同一主带天体、相隔 9 天的两个精确可归属量（地心观测者）及真值"""
    return synthetic_pair(mb_orbit, exact_eph, 54000.0, 54009.0)


@pytest.fixture(scope="session")
def linkage_cfg():
    return LinkageConfig()


@pytest.fixture(scope="session")
def linked_mb(mb_pair, linkage_cfg):
    """mb_pair 的扩展精度关联结果（多个测试共用）"""
    from linkage import link

    return link(mb_pair.A1, mb_pair.A2, linkage_cfg)


@pytest.fixture
def data_dir() -> Path:
    return ROOT / "data"
