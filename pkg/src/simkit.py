"""
模拟巡天模块
生成椭圆轨道族、合成带噪声的短弧观测，串联筛选与关联并按真值打分
"""

import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

try:
    from .attributable import Attributable, Observation, attributable_from_tracklet
    from .config import Config
    from .core import (
        ARCSEC, C_LIGHT, ConfigError, InsufficientObservationsError, angular_separation,
        ecliptic_to_equatorial, equatorial_to_ecliptic, normalize_angle,
    )
    from .elements import KeplerianElements, keplerian_to_cartesian
    from .ephemeris import EphemerisProvider, default_ephemeris, observer_state
    from .filters import FilterConfig, enumerate_pairs, filter_pair, great_circle_metric, symmetric_lls_fit
    from .linkage import LinkageConfig, LinkageResult, link_many
except ImportError:
    from attributable import Attributable, Observation, attributable_from_tracklet
    from config import Config
    from core import (
        ARCSEC, C_LIGHT, ConfigError, InsufficientObservationsError, angular_separation,
        ecliptic_to_equatorial, equatorial_to_ecliptic, normalize_angle,
    )
    from elements import KeplerianElements, keplerian_to_cartesian
    from ephemeris import EphemerisProvider, default_ephemeris, observer_state
    from filters import FilterConfig, enumerate_pairs, filter_pair, great_circle_metric, symmetric_lls_fit
    from linkage import LinkageConfig, LinkageResult, link_many

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PopulationSpec:
    """
    合成巡天参数

    a 为 AU，I 为度；nights 是相对 start_mjd 的夜序号。
    """

    n_objects: int = 200
    neo_fraction: float = 0.1
    mb_a: Tuple[float, float] = (2.1, 3.3)
    mb_e: Tuple[float, float] = (0.0, 0.3)
    mb_i: Tuple[float, float] = (0.0, 20.0)
    neo_a: Tuple[float, float] = (1.1, 2.0)
    neo_e: Tuple[float, float] = (0.2, 0.5)
    neo_i: Tuple[float, float] = (0.0, 30.0)
    nights: Tuple[int, ...] = (0, 10)
    obs_per_tracklet: int = 3
    spacing_minutes: Tuple[float, float] = (15.0, 30.0)
    noise_arcsec: float = 0.01
    station: str = "F51"
    start_mjd: float = 54000.0
    opposition_window: float = 30.0
    min_elongation: float = 60.0
    false_rate: float = 0.0
    light_time: bool = True

    def __post_init__(self):
        for lo, hi in (self.mb_e, self.neo_e):
            if not 0.0 <= lo <= hi < 1.0:
                raise ConfigError("偏心率范围必须在 [0, 1) 内")
        for lo, hi in (self.mb_a, self.neo_a):
            if not 0.0 < lo <= hi:
                raise ConfigError("半长轴范围必须为正")
        if not self.noise_arcsec > 0:
            raise ConfigError("noise_arcsec 必须为正")
        if self.obs_per_tracklet < 2:
            raise ConfigError("每个 tracklet 至少需要 2 个观测")
        if not 0.0 <= self.neo_fraction <= 1.0 or not 0.0 <= self.false_rate <= 1.0:
            raise ConfigError("比例参数必须在 [0, 1] 内")

    @classmethod
    def from_config(cls, config=Config, **overrides) -> "PopulationSpec":
        values = dict(
            n_objects=config.SIM_N_OBJECTS,
            neo_fraction=config.SIM_NEO_FRACTION,
            nights=tuple(int(x) for x in str(config.SIM_NIGHTS).split(",") if x.strip()),
            obs_per_tracklet=config.SIM_OBS_PER_TRACKLET,
            noise_arcsec=config.SIM_NOISE_ARCSEC,
            station=config.SIM_STATION,
            start_mjd=config.SIM_START_MJD,
            min_elongation=config.SIM_MIN_ELONGATION,
            false_rate=config.SIM_FALSE_RATE,
        )
        values.update(overrides)
        return cls(**values)


class SimObject(NamedTuple):
    object_id: str
    elements: KeplerianElements
    kind: str


@dataclass
class Survey:
    """按 tracklet 分组的观测及真值（伪 tracklet 的真值为 None）"""

    tracklets: Dict[str, List[Observation]]
    truth: Dict[str, Optional[str]]
    skipped: int = 0

    def observations(self) -> List[Observation]:
        return [o for tid in sorted(self.tracklets) for o in self.tracklets[tid]]


@dataclass
class ExperimentReport:
    seed: int
    n_objects: int
    n_tracklets: int
    n_attributables: int
    n_pairs: int
    n_filtered: int
    true_pairs_total: int
    true_pairs_filtered: int
    true_links_found: int
    false_links_accepted: int
    total_accepted: int
    efficiency: float
    accuracy: float
    per_class: Dict[str, Dict[str, float]] = field(default_factory=dict)
    true_norms: List[float] = field(default_factory=list)
    false_norms: List[float] = field(default_factory=list)
    a_rel_errors: List[float] = field(default_factory=list)
    status_counts: Dict[str, int] = field(default_factory=dict)
    shuffled: bool = False

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("true_norms", "false_norms", "a_rel_errors"):
            out[key] = [round(v, 8) for v in out[key]]
        return out


# ---------------------------------------------------------------------------
# 轨道族
# ---------------------------------------------------------------------------

def _default_ephemeris() -> EphemerisProvider:
    """内置解析地球星历 + 随包测站表"""
    return default_ephemeris(Config.path("STATIONS_FILE"), lunar_offset=Config.EPHEMERIS_LUNAR_OFFSET)


def _anomaly_for_true_anomaly(f: float, e: float) -> float:
    """真近点角 -> 平近点角"""
    ecc = 2.0 * math.atan2(math.sqrt(1.0 - e) * math.sin(f / 2.0), math.sqrt(1.0 + e) * math.cos(f / 2.0))
    return normalize_angle(ecc - e * math.sin(ecc))


def _opposition_longitude(eph: EphemerisProvider, t: float) -> float:
    earth, _ = eph.earth_heliocentric(t)
    x, y, _ = equatorial_to_ecliptic(earth)
    return math.atan2(y, x)


def generate_population(spec: PopulationSpec, seed: int,
                        eph: Optional[EphemerisProvider] = None) -> List[SimObject]:
    """
    生成可复现的椭圆轨道族，初始日心黄经落在冲日方向 ±opposition_window 度内

    Args:
        spec: 巡天参数
        seed: 随机种子
        eph: 用于确定冲日方向的地球星历，缺省为内置解析模型
    """
    rng = np.random.default_rng(seed)
    eph = eph or _default_ephemeris()
    lon0 = _opposition_longitude(eph, spec.start_mjd)
    n_neo = int(round(spec.neo_fraction * spec.n_objects))
    population = []
    for k in range(spec.n_objects):
        kind = "NEO" if k < n_neo else "MB"
        a_rng, e_rng, i_rng = (spec.neo_a, spec.neo_e, spec.neo_i) if kind == "NEO" else \
            (spec.mb_a, spec.mb_e, spec.mb_i)
        a = rng.uniform(*a_rng)
        e = rng.uniform(*e_rng)
        inc = math.radians(rng.uniform(*i_rng))
        node = rng.uniform(0.0, 2.0 * math.pi)
        peri = rng.uniform(0.0, 2.0 * math.pi)
        lon = lon0 + math.radians(rng.uniform(-spec.opposition_window, spec.opposition_window))
        # 小倾角近似下纬度幅角 u ≈ λ − Ω
        f = lon - node - peri
        elements = KeplerianElements(
            a=a, e=e, I=inc, Omega=node, omega=peri,
            ell=_anomaly_for_true_anomaly(f, e), epoch=spec.start_mjd,
        )
        population.append(SimObject(f"{kind}{k:05d}", elements, kind))
    logger.info("generated %d objects (%d NEO-like), seed %d", len(population), n_neo, seed)
    return population


# ---------------------------------------------------------------------------
# 观测合成
# ---------------------------------------------------------------------------

def object_direction(el: KeplerianElements, q: np.ndarray, t: float, light_time: bool = True):
    """
    观测者 q 在 t 时刻看到的方向，迭代三次光行时

    Returns:
        (alpha, delta, rho)
    """
    t_emit = t
    for _ in range(3 if light_time else 1):
        r, _ = keplerian_to_cartesian(el, t_emit)
        d = ecliptic_to_equatorial(r) - q
        rho = float(np.linalg.norm(d))
        if light_time:
            t_emit = t - rho / C_LIGHT
    alpha = normalize_angle(math.atan2(d[1], d[0]))
    delta = math.asin(d[2] / rho)
    return alpha, delta, rho


def _tracklet_times(rng: np.random.Generator, night_start: float, n: int, spacing) -> List[float]:
    times = [night_start]
    for _ in range(n - 1):
        times.append(times[-1] + rng.uniform(*spacing) / 1440.0)
    return times


def synthesize_observations(population: Sequence[SimObject], eph: EphemerisProvider, spec: PopulationSpec,
                            seed: int) -> Survey:
    """
    每个天体每夜一个 tracklet；太阳距角低于 min_elongation 的 tracklet 跳过

    false_rate > 0 时把一部分 tracklet 的最后一个观测换成同夜另一天体的观测。
    """
    rng = np.random.default_rng(seed + 1)
    sigma = spec.noise_arcsec * ARCSEC
    tracklets: Dict[str, List[Observation]] = {}
    truth: Dict[str, Optional[str]] = {}
    skipped = 0
    for night in spec.nights:
        # 当地午夜附近开始，避免跨日
        night_start = spec.start_mjd + night + 0.25
        for obj in population:
            tid = f"{obj.object_id}_n{night:03d}"
            times = _tracklet_times(rng, night_start + rng.uniform(0.0, 0.1), spec.obs_per_tracklet,
                                    spec.spacing_minutes)
            obs = []
            for t in times:
                q, _ = observer_state(eph, spec.station, t)
                alpha, delta, _ = object_direction(obj.elements, q, t, spec.light_time)
                direction = np.array([math.cos(alpha) * math.cos(delta), math.sin(alpha) * math.cos(delta),
                                      math.sin(delta)])
                if math.degrees(angular_separation(-q, direction)) < spec.min_elongation:
                    obs = None
                    break
                alpha = normalize_angle(alpha + rng.normal(0.0, sigma) / math.cos(delta))
                delta = delta + rng.normal(0.0, sigma)
                obs.append(Observation(t, alpha, delta, sigma, sigma, spec.station, tid))
            if obs is None:
                logger.debug("tracklet %s skipped: solar elongation below %.1f deg", tid, spec.min_elongation)
                skipped += 1
                continue
            tracklets[tid] = obs
            truth[tid] = obj.object_id

    if spec.false_rate > 0 and len(tracklets) > 1:
        by_night = defaultdict(list)
        for tid in sorted(tracklets):
            by_night[tid.rsplit("_n", 1)[1]].append(tid)
        for night_ids in by_night.values():
            for tid in night_ids:
                if len(night_ids) < 2 or rng.uniform() >= spec.false_rate:
                    continue
                donor = night_ids[(night_ids.index(tid) + 1 + rng.integers(len(night_ids) - 1)) % len(night_ids)]
                last = tracklets[tid][-1]
                src = tracklets[donor][-1]
                tracklets[tid] = tracklets[tid][:-1] + [
                    Observation(last.time, src.alpha, src.delta, sigma, sigma, spec.station, tid)
                ]
                truth[tid] = None
    logger.info("synthesized %d tracklets (%d skipped)", len(tracklets), skipped)
    return Survey(tracklets, truth, skipped)


def build_attributables(survey: Survey, eph: EphemerisProvider, degree: int = 2) -> List[Attributable]:
    """对每个 tracklet 拟合可归属量，观测不足的跳过"""
    out = []
    for tid in sorted(survey.tracklets):
        try:
            out.append(attributable_from_tracklet(survey.tracklets[tid], eph, degree))
        except InsufficientObservationsError as e:
            logger.warning("tracklet %s skipped: %s", tid, e)
    return out


# ---------------------------------------------------------------------------
# 实验与评分
# ---------------------------------------------------------------------------

def _derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """无不动点的随机排列"""
    if n < 2:
        return np.arange(n)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def _shuffled_pairs(attributables: Sequence[Attributable], truth: Dict[str, Optional[str]],
                    rng: np.random.Generator) -> List[Tuple[int, int]]:
    """每个天体的首个可归属量与另一天体的第二个可归属量配对，全部为假配对"""
    by_object = defaultdict(list)
    for k, A in enumerate(attributables):
        if truth.get(A.id) is not None:
            by_object[truth[A.id]].append(k)
    objects = sorted(o for o, idx in by_object.items() if len(idx) >= 2)
    perm = _derangement(len(objects), rng)
    pairs = []
    for i, obj in enumerate(objects):
        first = by_object[obj][0]
        second = by_object[objects[perm[i]]][1]
        pairs.append((first, second) if attributables[first].epoch <= attributables[second].epoch
                     else (second, first))
    return pairs


def run_experiment(spec: PopulationSpec, filter_cfg: FilterConfig, linkage_cfg: LinkageConfig, seed: int,
                   eph: Optional[EphemerisProvider] = None, workers: int = 1, shuffle_labels: bool = False,
                   progress: bool = False, degree: int = 2) -> ExperimentReport:
    """
    生成 -> 合成 -> 拟合 -> 配对筛选 -> 关联 -> 按真值打分

    效率 = 至少有一条正确关联的天体数 / 至少有两个可归属量的天体数；
    准确率 = 正确关联数 / 全部接受的关联数。shuffle_labels 时只评估跨天体配对。
    """
    eph = eph or _default_ephemeris()
    population = generate_population(spec, seed, eph)
    survey = synthesize_observations(population, eph, spec, seed)
    attributables = build_attributables(survey, eph, degree)
    truth = survey.truth

    if shuffle_labels:
        pairs = _shuffled_pairs(attributables, truth, np.random.default_rng(seed + 2))
    else:
        pairs = enumerate_pairs(attributables, filter_cfg)
    reports = [filter_pair(attributables[i], attributables[j], filter_cfg) for i, j in pairs]
    passed = [p for p, rep in zip(pairs, reports) if rep.passed]

    def same_object(i, j):
        oi, oj = truth.get(attributables[i].id), truth.get(attributables[j].id)
        return oi is not None and oi == oj

    true_total = sum(1 for i, j in pairs if same_object(i, j))
    true_filtered = sum(1 for i, j in passed if same_object(i, j))
    logger.info("%d pairs, %d pass filters (%d/%d true)", len(pairs), len(passed), true_filtered, true_total)

    results: List[LinkageResult] = link_many([(attributables[i], attributables[j]) for i, j in passed],
                                             linkage_cfg, workers, progress)

    kinds = {obj.object_id: obj.kind for obj in population}
    truth_elements = {obj.object_id: obj.elements for obj in population}
    linked_objects = set()
    true_found = false_accepted = 0
    true_norms, false_norms, a_errors = [], [], []
    status_counts: Dict[str, int] = defaultdict(int)
    for (i, j), res in zip(passed, results):
        status_counts[res.status] += 1
        best = res.best
        if best is None:
            continue
        if same_object(i, j):
            true_found += 1
            true_norms.append(best.norm)
            obj = truth[attributables[i].id]
            linked_objects.add(obj)
            a_errors.append(abs(best.elements1.a - truth_elements[obj].a) / truth_elements[obj].a)
        else:
            false_accepted += 1
            false_norms.append(best.norm)

    per_object = defaultdict(int)
    for A in attributables:
        if truth.get(A.id) is not None:
            per_object[truth[A.id]] += 1
    eligible = {o for o, n in per_object.items() if n >= 2}
    per_class = {}
    for kind in sorted(set(kinds.values())):
        members = {o for o in eligible if kinds[o] == kind}
        found = len(members & linked_objects)
        per_class[kind] = {
            "objects": len(members),
            "linked": found,
            "efficiency": found / len(members) if members else 0.0,
        }
    total_accepted = true_found + false_accepted
    report = ExperimentReport(
        seed=seed,
        n_objects=len(population),
        n_tracklets=len(survey.tracklets),
        n_attributables=len(attributables),
        n_pairs=len(pairs),
        n_filtered=len(passed),
        true_pairs_total=true_total,
        true_pairs_filtered=true_filtered,
        true_links_found=true_found,
        false_links_accepted=false_accepted,
        total_accepted=total_accepted,
        efficiency=len(eligible & linked_objects) / len(eligible) if eligible else 0.0,
        accuracy=true_found / total_accepted if total_accepted else 0.0,
        per_class=per_class,
        true_norms=sorted(true_norms),
        false_norms=sorted(false_norms),
        a_rel_errors=sorted(a_errors),
        status_counts=dict(sorted(status_counts.items())),
        shuffled=shuffle_labels,
    )
    logger.info("experiment seed %d: efficiency %.3f, accuracy %.3f", seed, report.efficiency, report.accuracy)
    return report


def calibrate_filters(spec: PopulationSpec, seed: int, eph: Optional[EphemerisProvider] = None,
                      keep: float = 0.99, margin: float = 1.1, base: Optional[FilterConfig] = None) -> FilterConfig:
    """
    在同天体配对上取各筛选量的 keep 分位数（乘以 margin）作为阈值

    Returns:
        新的 FilterConfig，时间窗沿用 base
    """
    base = base or FilterConfig()
    eph = eph or _default_ephemeris()
    population = generate_population(spec, seed, eph)
    survey = synthesize_observations(population, eph, spec, seed)
    attributables = build_attributables(survey, eph)
    metrics, sqrt_q, curv = [], [], []
    for i, j in enumerate_pairs(attributables, base):
        A1, A2 = attributables[i], attributables[j]
        o1, o2 = survey.truth.get(A1.id), survey.truth.get(A2.id)
        if o1 is None or o1 != o2:
            continue
        d = great_circle_metric(A1, A2)
        if not math.isnan(d):
            metrics.append(d)
        fit = symmetric_lls_fit(A1, A1.gamma, A2, A2.gamma)
        sqrt_q.append(fit.sqrt_q)
        if not math.isnan(fit.curvature_term):
            curv.append(abs(fit.curvature_term))
    if not metrics or not sqrt_q:
        raise InsufficientObservationsError("no same-object pairs to calibrate on")

    def quantile(values):
        return float(np.quantile(values, keep)) * margin

    calibrated = FilterConfig(
        dt_min=base.dt_min,
        dt_max=base.dt_max,
        d_max=quantile(metrics),
        q_max=quantile(sqrt_q),
        curv_max=quantile(curv) if curv else base.curv_max,
    )
    logger.info("calibrated on %d true pairs: d_max %.3e, q_max %.3e, curv_max %.3e",
                len(sqrt_q), calibrated.d_max, calibrated.q_max, calibrated.curv_max)
    return calibrated


def format_report(report: ExperimentReport) -> str:
    """人类可读的实验结果表"""
    lines = ["=" * 60, f"模拟巡天实验 (seed={report.seed}{', 标签打乱' if report.shuffled else ''})", "=" * 60]
    rows = [
        ("天体数", report.n_objects),
        ("tracklet 数", report.n_tracklets),
        ("可归属量数", report.n_attributables),
        ("候选配对", report.n_pairs),
        ("通过筛选", report.n_filtered),
        ("同天体配对（筛选前/后）", f"{report.true_pairs_total}/{report.true_pairs_filtered}"),
        ("正确关联", report.true_links_found),
        ("错误关联", report.false_links_accepted),
        ("效率", f"{report.efficiency:.3f}"),
        ("准确率", f"{report.accuracy:.3f}"),
    ]
    for name, value in rows:
        lines.append(f"  {name:<24}{value}")
    lines.append("-" * 60)
    lines.append(f"  {'类别':<10}{'天体':>8}{'已关联':>8}{'效率':>10}")
    for kind, stats in report.per_class.items():
        lines.append(f"  {kind:<10}{stats['objects']:>8}{stats['linked']:>8}{stats['efficiency']:>10.3f}")
    if report.true_norms:
        lines.append(f"  正确关联范数中位数: {float(np.median(report.true_norms)):.4f}")
    if report.false_norms:
        lines.append(f"  错误关联范数中位数: {float(np.median(report.false_norms)):.4f}")
    lines.append("=" * 60)
    return "\n".join(lines)


__all__ = [
    "PopulationSpec", "SimObject", "Survey", "ExperimentReport", "generate_population",
    "synthesize_observations", "build_attributables", "run_experiment", "calibrate_filters",
    "format_report", "object_direction",
]
