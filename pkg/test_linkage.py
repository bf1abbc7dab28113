"""
关联链路测试脚本
用随包的 (101878) 两个可归属量快速跑一遍完整关联
"""

import sys
from pathlib import Path

# 添加 src 目录到路径
sys.path.insert(0, str(Path(__file__).parent / "src"))

from attributable import attach_observer
from config import get_config, setup_logging
from core import OrbitLinkError
from data_loader import default_input, load_attributables
from ephemeris import default_ephemeris
from linkage import LinkageConfig, link


def main():
    print("=" * 80)
    print("双可归属量初轨关联 - 快速测试")
    print("=" * 80)

    # 验证配置
    config = get_config()
    try:
        config.validate()
        setup_logging(config.LOG_LEVEL)
        print("\n✓ 配置验证通过")
        print(f"✓ 求解引擎: {config.LINKAGE_ENGINE}, 精度档: {config.PRECISION_TIER}\n")
    except OrbitLinkError as e:
        print(f"\n✗ 配置错误: {e}")
        return

    sample = default_input("101878_attributables.json")
    if sample is None:
        print("✗ 未找到示例文件 101878_attributables.json")
        return

    try:
        eph = default_ephemeris(config.path("STATIONS_FILE"))
        A1, A2 = (attach_observer(a, eph) for a in load_attributables(sample))
        print(f"✓ 已加载 {A1.id} (t={A1.epoch}) 与 {A2.id} (t={A2.epoch})\n")

        # 两个历元相隔约 109 天，这里直接关联，不经过筛选
        cfg = LinkageConfig.from_config()
        result = link(A1, A2, cfg)

        print("=" * 80)
        print(f"状态: {result.status}")
        print("=" * 80)
        for sol in result.solutions:
            mark = "✓" if any(sol is s for s in result.accepted) else "✗"
            norm = "n/a" if sol.norm is None else f"{sol.norm:.5f}"
            el = sol.elements1
            print(f"  {mark} rho=({sol.rho1:.4f}, {sol.rho2:.4f})  a={el.a:.5f}  e={el.e:.5f}  ‖Δ‖={norm}")
        for rej in result.rejected:
            print(f"  ✗ rho=({rej.rho1:.4f}, {rej.rho2:.4f})  剔除: {', '.join(rej.reasons)}")

        print(f"\n✓ 关联测试完成！接受 {len(result.accepted)} 个解\n")

    except Exception as e:
        print(f"\n✗ 错误: {e}")
        import traceback
        traceback.print_exc()


if __name__ == "__main__":
    main()
