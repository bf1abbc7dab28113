"""
时间跨度、大圆度量与对称二次拟合筛选
"""

import math

import numpy as np
import pytest

from attributable import Attributable
from config import Config
from core import ConfigError, InsufficientObservationsError, SingularCovarianceError
from filters import (
    REPORT_COLUMNS, FilterConfig, enumerate_pairs, filter_pair, great_circle_metric, run_filters,
    symmetric_lls_fit, time_span_filter,
)

GAMMA = np.diag([1e-12, 1e-12, 1e-10, 1e-10])


def _att(alpha, delta, alpha_dot, delta_dot, epoch, ident="", gamma=GAMMA):
    return Attributable(alpha, delta, alpha_dot, delta_dot, epoch=epoch, gamma=np.array(gamma), id=ident)


def _equatorial_quadratic(a0=0.3, a1=0.01, a2=-2e-4, t1=54000.0, t2=54010.0):
    """赤道上 α(τ) = a0 + a1 τ + a2 τ²/2（τ 自 t1 起）的两个精确可归属量"""
    def at(t):
        tau = t - t1
        return _att(a0 + a1 * tau + 0.5 * a2 * tau ** 2, 0.0, a1 + a2 * tau, 0.0, t)
    return at(t1), at(t2)


def test_time_span_filter_is_closed_interval():
    cfg = FilterConfig()
    assert time_span_filter(54000.0, 54000.5, cfg)
    assert time_span_filter(54099.0, 54000.0, cfg)
    assert not time_span_filter(54000.0, 54000.49, cfg)
    assert not time_span_filter(54000.0, 54099.01, cfg)


def test_great_circle_metric_zero_on_great_circle():
    A1 = _att(0.1, 0.0, 0.01, 0.0, 54000.0)
    A2 = _att(0.15, 0.0, 0.01, 0.0, 54005.0)
    assert great_circle_metric(A1, A2) == pytest.approx(0.0, abs=1e-12)


def test_great_circle_metric_inclined_circle():
    # 绕 x 轴倾斜的大圆上匀速运动
    incl, eta, dt = 0.4, 0.012, 7.0

    def state(u):
        r = np.array([math.cos(u), math.sin(u) * math.cos(incl), math.sin(u) * math.sin(incl)])
        v = eta * np.array([-math.sin(u), math.cos(u) * math.cos(incl), math.cos(u) * math.sin(incl)])
        alpha, delta = math.atan2(r[1], r[0]), math.asin(r[2])
        delta_dot = v[2] / math.cos(delta)
        alpha_dot = (r[0] * v[1] - r[1] * v[0]) / (r[0] ** 2 + r[1] ** 2)
        return alpha, delta, alpha_dot, delta_dot

    A1 = _att(*state(0.2), 54000.0)
    A2 = _att(*state(0.2 + eta * dt), 54000.0 + dt)
    assert great_circle_metric(A1, A2) < 1e-12


def test_great_circle_metric_is_symmetric_and_measures_offset():
    A1 = _att(0.1, 0.0, 0.01, 0.0, 54000.0)
    A2 = _att(0.15, 0.01, 0.01, 0.0, 54005.0)
    d = great_circle_metric(A1, A2)
    assert d == pytest.approx(great_circle_metric(A2, A1), abs=1e-15)
    assert d == pytest.approx(0.01, rel=5e-3)


def test_great_circle_metric_undefined_without_motion():
    A1 = _att(0.1, 0.0, 0.0, 0.0, 54000.0)
    A2 = _att(0.15, 0.0, 0.01, 0.0, 54005.0)
    assert math.isnan(great_circle_metric(A1, A2))


def test_lls_fit_recovers_exact_quadratic():
    A1, A2 = _equatorial_quadratic()
    fit = symmetric_lls_fit(A1, A1.gamma, A2, A2.gamma)
    assert fit.t_mean == pytest.approx(54005.0)
    # 于 t̄：α = a0 + 5 a1 + 12.5 a2
    np.testing.assert_allclose(fit.x, [0.3 + 0.05 - 2.5e-3, 0.01 - 1e-3, -2e-4, 0.0, 0.0, 0.0], atol=1e-10)
    assert fit.sqrt_q < 1e-4
    assert fit.curvature_term == pytest.approx(0.0, abs=1e-12)
    assert fit.eta_q == pytest.approx(0.009, rel=1e-9)


def test_lls_fit_unwraps_right_ascension():
    A1, A2 = _equatorial_quadratic(a0=2 * math.pi - 0.02, a2=0.0)
    A2 = _att(A2.alpha - 2 * math.pi, 0.0, A2.alpha_dot, 0.0, A2.epoch)
    fit = symmetric_lls_fit(A1, A1.gamma, A2, A2.gamma)
    assert fit.sqrt_q < 1e-4


def test_lls_fit_residual_grows_with_inconsistency():
    A1, A2 = _equatorial_quadratic(a2=0.0)
    bad = _att(A2.alpha, 0.0, A2.alpha_dot + 1e-3, 0.0, A2.epoch)
    fit = symmetric_lls_fit(A1, A1.gamma, bad, bad.gamma)
    assert fit.sqrt_q > 1.0


def test_lls_fit_rejects_equal_epochs():
    A1 = _att(0.1, 0.0, 0.01, 0.0, 54000.0)
    A2 = _att(0.2, 0.0, 0.01, 0.0, 54000.0)
    with pytest.raises(InsufficientObservationsError):
        symmetric_lls_fit(A1, A1.gamma, A2, A2.gamma)


def test_lls_fit_rejects_singular_covariance():
    A1, A2 = _equatorial_quadratic()
    with pytest.raises(SingularCovarianceError):
        symmetric_lls_fit(A1, np.zeros((4, 4)), A2, A2.gamma)


def test_filter_pair_passes_consistent_pair():
    A1, A2 = _equatorial_quadratic()
    report = filter_pair(A1, A2, FilterConfig())
    assert report.passed
    assert report.flags == []
    assert report.dt == pytest.approx(10.0)


def test_filter_pair_flags():
    cfg = FilterConfig()
    A1 = _att(0.1, 0.0, 0.01, 0.0, 54000.0)
    assert filter_pair(A1, _att(0.1, 0.0, 0.01, 0.0, 54000.1), cfg).flags == ["time span"]
    off = filter_pair(A1, _att(0.15, 0.2, 0.01, 0.0, 54005.0), cfg)
    assert off.flags == ["great circle"] and not off.passed

    A1, A2 = _equatorial_quadratic(a2=0.0)
    bad = _att(A2.alpha, 0.0, A2.alpha_dot + 1e-3, 0.0, A2.epoch)
    strict = FilterConfig(q_max=1.0)
    assert filter_pair(A1, bad, strict).flags == ["lls residual"]

    curved = _att(0.15, 0.0, 0.01, 0.0, 54005.0)
    report = filter_pair(_att(0.1, 0.0, 0.01, 0.0, 54000.0), curved, FilterConfig(curv_max=1e-3))
    assert report.passed


def test_filter_pair_without_covariance_skips_lls():
    A1 = _att(0.1, 0.0, 0.01, 0.0, 54000.0, gamma=np.zeros((4, 4)))
    A2 = _att(0.15, 0.0, 0.01, 0.0, 54005.0, gamma=np.zeros((4, 4)))
    report = filter_pair(A1, A2, FilterConfig())
    assert report.passed
    assert report.flags == ["lls skipped"]


def test_filter_pair_with_undefined_metric():
    A1 = _att(0.1, 0.0, 0.0, 0.0, 54000.0)
    A2 = _att(0.1, 0.0, 0.0, 0.0, 54005.0)
    report = filter_pair(A1, A2, FilterConfig())
    assert "metric undefined" in report.flags


def test_enumerate_pairs():
    epochs = [54050.0, 54000.0, 54000.2, 54001.0, 54200.0]
    atts = [_att(0.1, 0.0, 0.01, 0.0, t, ident=f"a{k}") for k, t in enumerate(epochs)]
    pairs = enumerate_pairs(atts, FilterConfig())
    assert pairs == [(1, 0), (1, 3), (2, 0), (2, 3), (3, 0)]
    for i, j in pairs:
        assert atts[i].epoch <= atts[j].epoch


def test_run_filters_report_rows():
    A1, A2 = _equatorial_quadratic()
    A1.id, A2.id = "x", "y"
    reports = run_filters([A1, A2], FilterConfig())
    assert len(reports) == 1
    row = reports[0].as_row()
    assert tuple(row) == REPORT_COLUMNS
    assert (row["id1"], row["id2"], row["passed"]) == ("x", "y", True)


def test_d_max_table_interpolation():
    cfg = FilterConfig(d_max_table=((1.0, 0.01), (10.0, 0.1)))
    assert cfg.d_max_for(5.5) == pytest.approx(0.055)
    assert cfg.d_max_for(-5.5) == pytest.approx(0.055)
    assert cfg.d_max_for(50.0) == pytest.approx(0.1)
    assert cfg.d_max_for(0.2) == pytest.approx(0.01)
    assert FilterConfig().d_max_for(5.0) == 0.05


def test_filter_config_from_config():
    Config.FILTER_D_MAX_TABLE = ((1.0, 0.02), (30.0, 0.2))
    Config.FILTER_DT_MAX = 40.0
    cfg = FilterConfig.from_config()
    assert cfg.dt_max == 40.0
    assert cfg.d_max_table == ((1.0, 0.02), (30.0, 0.2))


@pytest.mark.parametrize("kwargs", [
    {"dt_min": 0.0}, {"dt_min": 10.0, "dt_max": 5.0}, {"d_max": 0.0}, {"q_max": -1.0}, {"curv_max": 0.0},
])
def test_filter_config_rejects_invalid(kwargs):
    with pytest.raises(ConfigError):
        FilterConfig(**kwargs)
