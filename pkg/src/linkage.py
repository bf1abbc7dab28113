"""
关联模块
一对可归属量的完整关联流程：构造方程组、求解、剔除伪解、组装轨道、协方差与接受判据
"""

import logging
import math
import multiprocessing as mp
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

try:
    from .attributable import Attributable
    from .config import Config
    from .core import (
        ConfigError, DegenerateGeometryError, HyperbolicOrbitError, NumericalFaultError,
        SingularCovarianceError, ZeroResultantError, get_arithmetic,
    )
    from .covariance import orbit_pair, refine_solution, solution_covariance
    from .elements import DeltaPair, KeplerianElements
    from .integrals import (
        Degeneracy, IntegralCoeffs, build_conic, build_p, check_degeneracy, compute_coeffs,
        energy_residuals, radial_velocities,
    )
    from .polysolve import Candidate, solve_system_dft, solve_system_normal_form
except ImportError:
    from attributable import Attributable
    from config import Config
    from core import (
        ConfigError, DegenerateGeometryError, HyperbolicOrbitError, NumericalFaultError,
        SingularCovarianceError, ZeroResultantError, get_arithmetic,
    )
    from covariance import orbit_pair, refine_solution, solution_covariance
    from elements import DeltaPair, KeplerianElements
    from integrals import (
        Degeneracy, IntegralCoeffs, build_conic, build_p, check_degeneracy, compute_coeffs,
        energy_residuals, radial_velocities,
    )
    from polysolve import Candidate, solve_system_dft, solve_system_normal_form

logger = logging.getLogger(__name__)

ENGINES = ("dft", "normal_form", "both")
PSI_LABELS = ("alpha", "delta", "alpha_dot", "delta_dot", "rho", "rho_dot", "d_omega", "d_ell")


@dataclass(frozen=True)
class LinkageConfig:
    """关联参数；χ_max 是接受阈值"""

    engine: str = "dft"
    eliminate: str = "rho1"
    rho_min: float = 1e-4
    near_zero_rho: float = 0.01
    imag_tol: float = 1e-9
    spurious_tol: float = 1e-6
    conic_tol: float = 1e-8
    chi_max: float = 10.0
    dedup_tol: float = 1e-6
    resultant_precision: str = "extended"
    normal_form_precision: str = "extended"
    roots_precision: str = "extended"
    xscalar_bits: int = 128
    normal_form_bits: int = 256

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"engine 必须是 {ENGINES} 之一: {self.engine!r}")
        if self.eliminate not in ("rho1", "rho2"):
            raise ConfigError(f"eliminate 必须是 rho1 或 rho2: {self.eliminate!r}")
        if not self.rho_min > 0:
            raise ConfigError("rho_min 必须为正")
        if not self.chi_max > 0:
            raise ConfigError("chi_max 必须为正")

    @classmethod
    def from_config(cls, config=Config) -> "LinkageConfig":
        tier = config.PRECISION_TIER
        # 全局 standard 档覆盖各阶段设置
        pick = (lambda v: "standard") if tier == "standard" else (lambda v: v)
        return cls(
            engine=config.LINKAGE_ENGINE,
            eliminate=config.LINKAGE_ELIMINATE,
            rho_min=config.LINKAGE_RHO_MIN,
            near_zero_rho=config.LINKAGE_NEAR_ZERO_RHO,
            imag_tol=config.LINKAGE_IMAG_TOL,
            spurious_tol=config.LINKAGE_SPURIOUS_TOL,
            conic_tol=config.LINKAGE_CONIC_TOL,
            chi_max=config.LINKAGE_CHI_MAX,
            dedup_tol=config.LINKAGE_DEDUP_TOL,
            resultant_precision=pick(config.RESULTANT_PRECISION),
            normal_form_precision=pick(config.NORMAL_FORM_PRECISION),
            roots_precision=pick(config.ROOTS_PRECISION),
            xscalar_bits=config.XSCALAR_BITS,
            normal_form_bits=config.NORMAL_FORM_BITS,
        )

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class LinkageSolution:
    rho1: float
    rho1_dot: float
    rho2: float
    rho2_dot: float
    elements1: KeplerianElements
    elements2: KeplerianElements
    t_tilde1: float
    t_tilde2: float
    delta: DeltaPair
    norm: Optional[float]
    covariance: Optional[np.ndarray]
    engine: str
    flags: Tuple[str, ...] = ()
    condition: float = float("nan")
    eigenvalues: Optional[np.ndarray] = None

    @property
    def sort_key(self) -> float:
        return math.inf if self.norm is None else self.norm


@dataclass(frozen=True)
class RejectedCandidate:
    rho1: float
    rho2: float
    engine: str
    reasons: Tuple[str, ...]


@dataclass
class LinkageResult:
    """
    单对可归属量的关联结果

    accepted 是 ‖Δ‖★ ≤ χ_max 的解；solutions 是全部非伪解（含超阈值者）；
    rejected 记录被剔除的候选及原因。
    """

    id1: str
    id2: str
    status: str = "ok"
    accepted: List[LinkageSolution] = field(default_factory=list)
    solutions: List[LinkageSolution] = field(default_factory=list)
    rejected: List[RejectedCandidate] = field(default_factory=list)
    degeneracy: Optional[Degeneracy] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def best(self) -> Optional[LinkageSolution]:
        return self.accepted[0] if self.accepted else None


def _merge_candidates(groups: Sequence[List[Candidate]], tol: float) -> Tuple[List[Candidate], int]:
    """
    多个引擎的候选取并集，距离不超过 tol（AU）的视为同一解

    Returns:
        (合并后的候选, 只出现在一个引擎里的候选数)
    """
    merged: List[Candidate] = []
    for group in groups:
        for cand in group:
            for i, kept in enumerate(merged):
                if abs(kept.rho1 - cand.rho1) <= tol and abs(kept.rho2 - cand.rho2) <= tol:
                    if cand.engine not in kept.engine.split("+"):
                        merged[i] = Candidate(kept.rho1, kept.rho2, f"{kept.engine}+{cand.engine}",
                                              kept.p_residual, kept.q_residual,
                                              max(kept.error_bound, cand.error_bound), kept.polished)
                    break
            else:
                merged.append(cand)
    engines = {c.engine for group in groups for c in group}
    unmatched = sum(1 for c in merged if len(engines) > 1 and "+" not in c.engine)
    return merged, unmatched


def _solve(c1: IntegralCoeffs, c2: IntegralCoeffs, cfg: LinkageConfig, diagnostics: dict) -> List[Candidate]:
    roots_arith = get_arithmetic(cfg.roots_precision, cfg.xscalar_bits)
    groups = []
    if cfg.engine in ("dft", "both"):
        system = build_p(c1, c2, arith=get_arithmetic(cfg.resultant_precision, cfg.xscalar_bits))
        result = solve_system_dft(system, eliminate=cfg.eliminate, rho_min=cfg.rho_min,
                                  imag_tol=cfg.imag_tol, roots_arith=roots_arith)
        diagnostics["dft"] = result.diagnostics
        groups.append(result.candidates)
    if cfg.engine in ("normal_form", "both"):
        nf_arith = get_arithmetic(cfg.normal_form_precision, cfg.normal_form_bits)
        system = build_p(c1, c2, arith=nf_arith)
        # 正规形式的 𝔭 在实根附近相消严重，求根也用 normal_form_bits
        result = solve_system_normal_form(system, rho_min=cfg.rho_min, imag_tol=cfg.imag_tol, arith=nf_arith,
                                          roots_arith=get_arithmetic(cfg.roots_precision, cfg.normal_form_bits))
        diagnostics["normal_form"] = result.diagnostics
        groups.append(result.candidates)
    candidates, unmatched = _merge_candidates(groups, cfg.dedup_tol)
    if cfg.engine == "both":
        diagnostics["engine_disagreements"] = unmatched
        if unmatched:
            logger.info("engines disagree on %d candidate(s): dft %s, normal form %s", unmatched,
                        diagnostics.get("dft"), diagnostics.get("normal_form"))
    return candidates


def assemble_orbit(cand: Candidate, c1: IntegralCoeffs, c2: IntegralCoeffs,
                   A1: Attributable, A2: Attributable, cfg: LinkageConfig):
    """
    候选 (ρ₁, ρ₂) -> 径向速度、伪解检查、光行差历元与两组根数

    Returns:
        (R, OrbitPair, flags) 或 (None, None, reasons)
    """
    if cand.rho1 < cfg.near_zero_rho and cand.rho2 < cfg.near_zero_rho:
        return None, None, ("near-zero pair",)
    conic = build_conic(c1, c2, get_arithmetic("standard"))
    q_res = abs(conic.evaluate(cand.rho1, cand.rho2)) / max(conic.scale(cand.rho1, cand.rho2), 1e-300)
    if not q_res < cfg.conic_tol:
        logger.debug("candidate (%.6f, %.6f) off the conic: %.3e", cand.rho1, cand.rho2, q_res)
        return None, None, ("conic-residual",)
    rho1_dot, rho2_dot = radial_velocities(c1, c2, cand.rho1, cand.rho2)
    residuals = energy_residuals(c1, c2, cand.rho1, cand.rho2, rho1_dot, rho2_dot)
    reasons = residuals.spurious_flags(cfg.spurious_tol)
    if reasons:
        return None, None, tuple(reasons)

    R0 = np.array([cand.rho1, rho1_dot, cand.rho2, rho2_dot])
    R, converged = refine_solution(R0, A1, A2)
    flags = []
    if not converged or np.max(np.abs(R - R0)) > 1e-6 * (1.0 + np.max(np.abs(R0))):
        R = R0
        flags.append("unrefined")
    try:
        orbits = orbit_pair(A1, A2, R)
    except HyperbolicOrbitError:
        return None, None, ("non-elliptic",)
    except NumericalFaultError as e:
        logger.debug("inconsistent elements at (%.6f, %.6f): %s", cand.rho1, cand.rho2, e)
        return None, None, ("inconsistent elements",)
    flags.extend(orbits.elements1.flags)
    return R, orbits, tuple(flags)


def link(A1: Attributable, A2: Attributable, cfg: Optional[LinkageConfig] = None) -> LinkageResult:
    """
    关联两个可归属量

    退化几何或结式恒为零时返回空结果并在 status 中说明；
    所有候选都是伪解时同样返回空结果，不视为错误。

    Args:
        A1, A2: 带观测者状态与协方差的可归属量
        cfg: 关联参数，缺省时取全局配置

    Returns:
        LinkageResult，accepted 按 ‖Δ‖★ 升序
    """
    cfg = cfg or LinkageConfig.from_config()
    result = LinkageResult(A1.id, A2.id)
    c1, c2 = compute_coeffs(A1), compute_coeffs(A2)

    result.degeneracy = check_degeneracy(c1, c2)
    if result.degeneracy.degenerate:
        result.status = f"degenerate: {result.degeneracy.kind}"
        logger.debug("pair %s/%s skipped: %s", A1.id, A2.id, result.status)
        return result

    try:
        candidates = _solve(c1, c2, cfg, result.diagnostics)
    except DegenerateGeometryError as e:
        result.status = f"degenerate: {e.kind}"
        return result
    except ZeroResultantError as e:
        result.status = "zero resultant"
        logger.warning("pair %s/%s: %s", A1.id, A2.id, e)
        return result

    for cand in candidates:
        R, orbits, flags = assemble_orbit(cand, c1, c2, A1, A2, cfg)
        if orbits is None:
            result.rejected.append(RejectedCandidate(cand.rho1, cand.rho2, cand.engine, flags))
            continue
        try:
            cov = solution_covariance(R, A1, A2, orbits.delta)
            norm, covariance = cov.norm, cov.psi.gamma_psi
            flags = flags + cov.flags
            condition, eigenvalues = cov.condition, cov.eigenvalues
        except SingularCovarianceError:
            norm, covariance, condition, eigenvalues = None, None, float("inf"), None
            flags = flags + ("singular covariance",)
        result.solutions.append(LinkageSolution(
            rho1=float(R[0]), rho1_dot=float(R[1]), rho2=float(R[2]), rho2_dot=float(R[3]),
            elements1=orbits.elements1, elements2=orbits.elements2,
            t_tilde1=orbits.t_tilde1, t_tilde2=orbits.t_tilde2, delta=orbits.delta,
            norm=norm, covariance=covariance, engine=cand.engine, flags=flags,
            condition=condition, eigenvalues=eigenvalues,
        ))

    result.solutions.sort(key=lambda s: (s.sort_key, s.rho1, s.rho2))
    result.accepted = [s for s in result.solutions if s.norm is not None and s.norm <= cfg.chi_max]
    logger.debug("pair %s/%s: %d candidates, %d solutions, %d accepted", A1.id, A2.id,
                 len(candidates), len(result.solutions), len(result.accepted))
    return result


def _link_worker(payload):
    A1, A2, cfg = payload
    return link(A1, A2, cfg)


def link_many(pairs: Iterable[Tuple[Attributable, Attributable]], cfg: Optional[LinkageConfig] = None,
              workers: int = 1, progress: bool = False) -> List[LinkageResult]:
    """
    批量关联；结果顺序与输入顺序一致，与进程数无关

    Args:
        pairs: (A1, A2) 序列
        workers: 进程数，1 时在当前进程内执行
        progress: 是否显示进度条
    """
    cfg = cfg or LinkageConfig.from_config()
    payloads = [(A1, A2, cfg) for A1, A2 in pairs]
    if workers <= 1 or len(payloads) <= 1:
        iterator = tqdm(payloads, desc="Linking pairs", unit="pair", disable=not progress)
        return [_link_worker(p) for p in iterator]
    ctx = mp.get_context("spawn")
    with ctx.Pool(processes=workers) as pool:
        # imap 保持输入顺序
        results = list(tqdm(pool.imap(_link_worker, payloads, chunksize=1), total=len(payloads),
                            desc="Linking pairs", unit="pair", disable=not progress))
    return results


def solution_record(sol: LinkageSolution, cfg: LinkageConfig) -> dict:
    """轨道输出 JSON 记录：角度为度，a 为 AU，协方差按行展开"""
    return {
        "rho1": round(sol.rho1, 10),
        "rho1_dot": round(sol.rho1_dot, 12),
        "rho2": round(sol.rho2, 10),
        "rho2_dot": round(sol.rho2_dot, 12),
        "t_tilde1": round(sol.t_tilde1, 8),
        "t_tilde2": round(sol.t_tilde2, 8),
        "elements1": sol.elements1.as_degrees(),
        "elements2": sol.elements2.as_degrees(),
        "delta_deg": [round(math.degrees(sol.delta.d_omega), 6), round(math.degrees(sol.delta.d_ell), 6)],
        "norm": None if sol.norm is None else round(sol.norm, 8),
        "chi_max": cfg.chi_max,
        "engine": sol.engine,
        "flags": list(sol.flags),
        "covariance": {
            "basis": list(PSI_LABELS),
            "epoch": round(sol.t_tilde1, 8),
            "matrix": None if sol.covariance is None else [float(f"{v:.12e}") for v in sol.covariance.ravel()],
        },
        "eigenvalues_6x6": None if sol.eigenvalues is None else [float(f"{v:.12e}") for v in sol.eigenvalues],
        "condition": None if not math.isfinite(sol.condition) else float(f"{sol.condition:.6e}"),
    }


def result_record(result: LinkageResult, cfg: LinkageConfig) -> dict:
    return {
        "id1": result.id1,
        "id2": result.id2,
        "status": result.status,
        "degeneracy": None if result.degeneracy is None else result.degeneracy.kind,
        "accepted": [solution_record(s, cfg) for s in result.accepted],
        "solutions": [solution_record(s, cfg) for s in result.solutions],
        "rejected": [
            {"rho1": round(r.rho1, 10), "rho2": round(r.rho2, 10), "engine": r.engine, "reasons": list(r.reasons)}
            for r in result.rejected
        ],
    }


__all__ = [
    "LinkageConfig", "LinkageSolution", "LinkageResult", "RejectedCandidate", "link", "link_many",
    "assemble_orbit", "solution_record", "result_record", "PSI_LABELS",
]
