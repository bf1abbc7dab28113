"""
命令行入口
子命令：attributables、filter、link、simulate、report
"""

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

try:
    from .attributable import attach_observer, attributable_from_tracklet
    from .config import get_config, setup_logging
    from .core import VERSION, InsufficientObservationsError, OrbitLinkError
    from .data_loader import (
        group_tracklets, load_attributables, load_json, load_observations, save_json, save_observations,
        write_filter_report,
    )
    from .ephemeris import default_ephemeris
    from .filters import FilterConfig, enumerate_pairs, filter_pair
    from .linkage import LinkageConfig, link_many, result_record
    from .simkit import (
        ExperimentReport, PopulationSpec, calibrate_filters, format_report, generate_population,
        run_experiment, synthesize_observations,
    )
except ImportError:
    from attributable import attach_observer, attributable_from_tracklet
    from config import get_config, setup_logging
    from core import VERSION, InsufficientObservationsError, OrbitLinkError
    from data_loader import (
        group_tracklets, load_attributables, load_json, load_observations, save_json, save_observations,
        write_filter_report,
    )
    from ephemeris import default_ephemeris
    from filters import FilterConfig, enumerate_pairs, filter_pair
    from linkage import LinkageConfig, link_many, result_record
    from simkit import (
        ExperimentReport, PopulationSpec, calibrate_filters, format_report, generate_population,
        run_experiment, synthesize_observations,
    )

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """用法错误统一返回退出码 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def display_banner(command: str):
    print("\n" + "=" * 80)
    print(f"双可归属量初轨关联 v{VERSION}: {command}")
    print("=" * 80 + "\n")


def _envelope(payload: dict) -> dict:
    """所有输出文件共有的字段：生成时间与生效配置"""
    config = get_config()
    out = dict(payload)
    out["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    out["config"] = config.as_dict()
    out["version"] = VERSION
    return out


def _ephemeris(args):
    config = get_config()
    table = args.ephemeris or (config.EPHEMERIS_FILE or None)
    return default_ephemeris(config.path("STATIONS_FILE"), table, lunar_offset=config.EPHEMERIS_LUNAR_OFFSET)


# ---------------------------------------------------------------------------
# 子命令
# ---------------------------------------------------------------------------

def cmd_attributables(args) -> int:
    """观测 CSV -> 可归属量 JSON，每个 tracklet 一个"""
    config = get_config()
    eph = _ephemeris(args)
    groups = group_tracklets(load_observations(args.input))
    attributables = []
    for tid, obs in groups.items():
        try:
            attributables.append(attributable_from_tracklet(obs, eph, args.degree or config.ATTRIBUTABLE_DEGREE))
        except InsufficientObservationsError as e:
            logger.warning("tracklet %s skipped: %s", tid, e)
            print(f"✗ 跳过 {tid}: {e}")
            continue
        print(f"✓ {tid}: {len(obs)} 个观测")
    save_json(_envelope({"attributables": [a.to_dict() for a in attributables]}), args.output)
    print(f"\n共 {len(attributables)} 个可归属量 -> {args.output}")
    return 0


def _load_linkable(args):
    eph = _ephemeris(args)
    return [attach_observer(a, eph) for a in load_attributables(args.input)]


def cmd_filter(args) -> int:
    attributables = _load_linkable(args)
    cfg = FilterConfig.from_config()
    reports = [filter_pair(attributables[i], attributables[j], cfg) for i, j in enumerate_pairs(attributables, cfg)]
    write_filter_report(reports, args.output)
    passed = sum(r.passed for r in reports)
    print(f"✓ {len(reports)} 个配对，{passed} 个通过筛选 -> {args.output}")
    return 0


def cmd_link(args) -> int:
    """可归属量 JSON -> 轨道 JSON（结果为空时也返回 0）"""
    config = get_config()
    attributables = _load_linkable(args)
    filter_cfg = FilterConfig.from_config()
    linkage_cfg = LinkageConfig.from_config()

    if args.no_filter:
        pairs = [(i, j) for i in range(len(attributables)) for j in range(i + 1, len(attributables))]
        reports = []
    else:
        candidates = enumerate_pairs(attributables, filter_cfg)
        reports = [filter_pair(attributables[i], attributables[j], filter_cfg) for i, j in candidates]
        pairs = [p for p, r in zip(candidates, reports) if r.passed]
        if args.filter_report:
            write_filter_report(reports, args.filter_report)
    print(f"待关联配对: {len(pairs)}")

    results = link_many([(attributables[i], attributables[j]) for i, j in pairs], linkage_cfg,
                        workers=args.workers or config.WORKERS, progress=not args.quiet)
    records = sorted((result_record(r, linkage_cfg) for r in results), key=lambda r: (r["id1"], r["id2"]))
    for rec in records:
        mark = "✓" if rec["accepted"] else "✗"
        norms = ", ".join(f"{s['norm']:.5f}" for s in rec["accepted"])
        print(f"{mark} {rec['id1']} / {rec['id2']}: {rec['status']}, 接受 {len(rec['accepted'])} 个解 {norms}")
    save_json(_envelope({"linkage": linkage_cfg.as_dict(), "results": records}), args.output)
    print(f"\n结果已写入 {args.output}")
    return 0


def cmd_simulate(args) -> int:
    config = get_config()
    eph = _ephemeris(args)
    overrides = {"n_objects": args.objects} if args.objects else {}
    spec = PopulationSpec.from_config(config, **overrides)
    filter_cfg = FilterConfig.from_config()
    if args.calibrate:
        filter_cfg = calibrate_filters(spec, args.seed, eph, base=filter_cfg)
        print(f"✓ 标定阈值: d_max={filter_cfg.d_max:.4e}, q_max={filter_cfg.q_max:.4e}, "
              f"curv_max={filter_cfg.curv_max:.4e}")
    if args.save_observations:
        survey = synthesize_observations(generate_population(spec, args.seed, eph), eph, spec, args.seed)
        save_observations(survey.observations(), args.save_observations)
        print(f"✓ 观测已写入 {args.save_observations}")

    report = run_experiment(spec, filter_cfg, LinkageConfig.from_config(), args.seed, eph,
                            workers=args.workers or config.WORKERS, shuffle_labels=args.shuffle,
                            progress=not args.quiet, degree=config.ATTRIBUTABLE_DEGREE)
    print(format_report(report))
    save_json(_envelope({"report": report.to_dict(), "filter": filter_cfg.__dict__}), args.output)
    return 0


def cmd_report(args) -> int:
    """把 link 或 simulate 的输出打印成表格"""
    payload = load_json(args.input)
    if "report" in payload:
        print(format_report(ExperimentReport(**payload["report"])))
        return 0
    print(f"{'id1':<16}{'id2':<16}{'rho1':>10}{'rho2':>10}{'a':>10}{'e':>9}{'I':>10}{'norm':>14}")
    print("-" * 95)
    for rec in payload.get("results", []):
        for sol in rec["accepted"]:
            el = sol["elements1"]
            print(f"{rec['id1']:<16}{rec['id2']:<16}{sol['rho1']:>10.5f}{sol['rho2']:>10.5f}"
                  f"{el['a']:>10.5f}{el['e']:>9.5f}{el['I']:>10.5f}{sol['norm']:>14.5f}")
    return 0


# ---------------------------------------------------------------------------
# 参数解析
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orbitlink", description="由两个短弧可归属量计算二体初轨并判定是否同一天体")
    parser.add_argument("--config", type=Path, help="KEY=VALUE 配置文件")
    parser.add_argument("--workers", type=int, help="并行进程数")
    parser.add_argument("--precision", choices=("standard", "extended"), help="全局精度档")
    parser.add_argument("--engine", choices=("dft", "normal_form", "both"), help="求解引擎")
    parser.add_argument("--eliminate", choices=("rho1", "rho2"), help="结式消去的变量")
    parser.add_argument("--chi-max", type=float, help="识别范数阈值")
    parser.add_argument("--ephemeris", type=Path, help="地球星历表文件")
    parser.add_argument("--log-level", help="日志级别")
    parser.add_argument("--seed", type=int, default=1, help="随机种子")
    parser.add_argument("--quiet", action="store_true", help="不显示进度条")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attributables", help="观测 CSV -> 可归属量 JSON")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("output/attributables.json"))
    p.add_argument("--degree", type=int, choices=(1, 2))
    p.set_defaults(func=cmd_attributables)

    p = sub.add_parser("filter", help="配对筛选，输出 CSV 报告")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("output/filter_report.csv"))
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("link", help="关联可归属量，输出轨道 JSON")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("output/orbits.json"))
    p.add_argument("--filter-report", type=Path)
    p.add_argument("--no-filter", action="store_true", help="跳过筛选，关联全部配对")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("simulate", help="合成巡天实验")
    p.add_argument("-o", "--output", type=Path, default=Path("output/simulation.json"))
    p.add_argument("--objects", type=int)
    p.add_argument("--shuffle", action="store_true", help="只评估跨天体配对（误报控制）")
    p.add_argument("--calibrate", action="store_true", help="先在同一族上标定筛选阈值")
    p.add_argument("--save-observations", type=Path)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="打印 link/simulate 输出")
    p.add_argument("input", type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def _apply_overrides(args):
    config = get_config()
    if args.config:
        config.load_file(args.config)
    overrides = {
        "WORKERS": args.workers,
        "PRECISION_TIER": args.precision,
        "LINKAGE_ENGINE": args.engine,
        "LINKAGE_ELIMINATE": args.eliminate,
        "LINKAGE_CHI_MAX": args.chi_max,
        "LOG_LEVEL": args.log_level,
    }
    for key, value in overrides.items():
        if value is not None:
            config.set(key, value)
    config.validate()


def main(argv: Optional[List[str]] = None) -> int:
    """
    主函数

    Returns:
        退出状态码：0 成功，1 用法/配置错误，2 输入解析错误，3 内部数值错误
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_overrides(args)
        setup_logging(get_config().LOG_LEVEL)
        if args.command != "report":
            display_banner(args.command)
        return args.func(args)
    except OrbitLinkError as e:
        print(f"✗ {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\n\n检测到中断信号。正在退出...\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
