"""
数据读写模块
负责读取观测 CSV、可归属量 JSON，并写出轨道、筛选报告与星历表
"""

import json
import logging
import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

try:
    from .attributable import Attributable, Observation
    from .config import get_config
    from .core import ARCSEC, InputParseError, equatorial_to_ecliptic
    from .ephemeris import EphemerisProvider
    from .filters import REPORT_COLUMNS, FilterReport
except ImportError:
    from attributable import Attributable, Observation
    from config import get_config
    from core import ARCSEC, InputParseError, equatorial_to_ecliptic
    from ephemeris import EphemerisProvider
    from filters import REPORT_COLUMNS, FilterReport

logger = logging.getLogger(__name__)

# 观测 CSV 列：角度为度，误差为角秒（赤经方向为天球弧长）
OBS_COLUMNS = ("tracklet_id", "station", "mjd", "ra_deg", "dec_deg", "sigma_ra_arcsec", "sigma_dec_arcsec")
_NUMERIC = ("mjd", "ra_deg", "dec_deg", "sigma_ra_arcsec", "sigma_dec_arcsec")


def load_observations(file_path: Path) -> List[Observation]:
    """
    读取观测 CSV

    Args:
        file_path: 带表头的 CSV，列见 OBS_COLUMNS；也接受 mjd,ra_deg,dec_deg,sigma_arcsec,station

    Returns:
        Observation 列表，保持文件顺序

    Raises:
        InputParseError: 文件不存在、缺列或某行无法解析（带行号，表头为第 1 行）
    """
    file_path = Path(file_path)
    if not file_path.is_file():
        raise InputParseError("观测文件不存在", str(file_path))
    try:
        df = pd.read_csv(file_path, dtype=str, comment="#", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputParseError(f"CSV 格式错误: {e}", str(file_path))

    # 简写格式：单列 sigma_arcsec，无 tracklet_id 时按测站和日期分组
    if "sigma_arcsec" in df.columns:
        for col in ("sigma_ra_arcsec", "sigma_dec_arcsec"):
            if col not in df.columns:
                df[col] = df["sigma_arcsec"]
    if "tracklet_id" not in df.columns and {"station", "mjd"} <= set(df.columns):
        days = pd.to_numeric(df["mjd"], errors="coerce").fillna(0).astype(float).apply(math.floor)
        df["tracklet_id"] = df["station"].str.strip() + "_" + days.astype(int).astype(str)

    missing = [c for c in OBS_COLUMNS if c not in df.columns]
    if missing:
        raise InputParseError(f"缺少列 {missing}", str(file_path), 1)

    for col in _NUMERIC:
        values = pd.to_numeric(df[col], errors="coerce")
        bad = values.isna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise InputParseError(f"列 {col} 无法解析为数值: {df[col].iloc[row]!r}", str(file_path), row + 2)
        df[col] = values

    observations = []
    for row, rec in enumerate(df.itertuples(index=False)):
        try:
            observations.append(Observation(
                time=float(rec.mjd),
                alpha=math.radians(float(rec.ra_deg)),
                delta=math.radians(float(rec.dec_deg)),
                sigma_alpha=float(rec.sigma_ra_arcsec) * ARCSEC,
                sigma_delta=float(rec.sigma_dec_arcsec) * ARCSEC,
                station=str(rec.station).strip(),
                tracklet_id=str(rec.tracklet_id).strip(),
            ))
        except ValueError as e:
            raise InputParseError(str(e), str(file_path), row + 2)
    logger.info("loaded %d observations from %s", len(observations), file_path)
    return observations


def group_tracklets(observations: Iterable[Observation]) -> Dict[str, List[Observation]]:
    """按 tracklet_id 分组，组内按时间排序，组按 id 排序"""
    groups = defaultdict(list)
    for obs in observations:
        groups[obs.tracklet_id].append(obs)
    return {tid: sorted(groups[tid], key=lambda o: o.time) for tid in sorted(groups)}


def save_observations(observations: Sequence[Observation], file_path: Path):
    rows = [{
        "tracklet_id": o.tracklet_id,
        "station": o.station,
        "mjd": f"{o.time:.10f}",
        "ra_deg": f"{math.degrees(o.alpha):.10f}",
        "dec_deg": f"{math.degrees(o.delta):.10f}",
        "sigma_ra_arcsec": f"{o.sigma_alpha / ARCSEC:.6f}",
        "sigma_dec_arcsec": f"{o.sigma_delta / ARCSEC:.6f}",
    } for o in observations]
    Path(file_path).parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=list(OBS_COLUMNS)).to_csv(file_path, index=False)


def load_attributables(file_path: Path) -> List[Attributable]:
    """
    读取可归属量 JSON：{"attributables": [...]} 或直接为列表

    Raises:
        InputParseError: 文件不存在、JSON 无效或条目缺字段
    """
    file_path = Path(file_path)
    if not file_path.is_file():
        raise InputParseError("可归属量文件不存在", str(file_path))
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise InputParseError(f"JSON 无效: {e.msg}", str(file_path), e.lineno)

    items = payload.get("attributables", []) if isinstance(payload, dict) else payload
    out = []
    for k, item in enumerate(items):
        try:
            out.append(Attributable.from_dict(item))
        except (KeyError, TypeError, ValueError) as e:
            raise InputParseError(f"第 {k} 个可归属量无效: {e}", str(file_path))
    logger.info("loaded %d attributables from %s", len(out), file_path)
    return out


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"无法序列化 {type(value).__name__}")


def save_json(payload: dict, file_path: Path):
    """键排序、缩进 2 的 JSON，保证相同输入字节一致"""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default)
        f.write("\n")


def load_json(file_path: Path) -> dict:
    file_path = Path(file_path)
    if not file_path.is_file():
        raise InputParseError("文件不存在", str(file_path))
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InputParseError(f"JSON 无效: {e.msg}", str(file_path), e.lineno)


def write_filter_report(reports: Sequence[FilterReport], file_path: Path):
    """筛选报告 CSV：id1,id2,dt,d_metric,sqrtQ,curv,passed"""
    df = pd.DataFrame([r.as_row() for r in reports], columns=list(REPORT_COLUMNS))
    Path(file_path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(file_path, index=False, float_format="%.10g")


def write_ephemeris_table(eph: EphemerisProvider, t_start: float, t_end: float, step: float,
                          file_path: Path, frame: str = "EQUJ2000"):
    """
    按固定步长采样地球日心状态，写出 TableEphemeris 可读的表

    Args:
        frame: EQUJ2000 或 ECLJ2000
    """
    times = np.arange(t_start, t_end + 0.5 * step, step)
    rows = []
    for t in times:
        r, v = eph.earth_heliocentric(float(t))
        if frame == "ECLJ2000":
            r, v = equatorial_to_ecliptic(r), equatorial_to_ecliptic(v)
        rows.append(np.concatenate([[t], r, v]))
    Path(file_path).parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(file_path, np.array(rows), fmt="%.15e", header=f"frame={frame}\nmjd x y z vx vy vz")


def default_input(name: str) -> Optional[Path]:
    """随包示例文件的路径"""
    path = get_config().path("EXAMPLES_DIR") / name
    return path if path.exists() else None


if __name__ == "__main__":
    # 测试加载功能
    print("=== 测试观测加载模块 ===\n")

    sample = default_input("sample_observations.csv")
    if sample:
        obs = load_observations(sample)
        groups = group_tracklets(obs)
        print(f"✓ 加载成功: {len(obs)} 个观测, {len(groups)} 个 tracklet")
        for tid, items in groups.items():
            print(f"  - {tid}: {len(items)} 个观测, 测站 {items[0].station}")
