"""
地球星历与测站
"""

import math

import numpy as np
import pytest

from core import AU_KM, EARTH_RADIUS_KM, InputParseError
from data_loader import write_ephemeris_table
from ephemeris import (
    KeplerianEarthEphemeris, StationCatalog, TableEphemeris, default_ephemeris, observer_state,
)


def test_station_catalog_loads_bundled_file(data_dir):
    catalog = StationCatalog.load(data_dir / "stations.txt")
    for code in ("500", "568", "G96", "F51"):
        assert code in catalog
    assert np.all(catalog.get("500").position(54000.0) == 0.0)


def test_station_distance_matches_parallax_constants(data_dir):
    station = StationCatalog.load(data_dir / "stations.txt").get("568")
    expected = math.hypot(station.rho_cos, station.rho_sin) * EARTH_RADIUS_KM / AU_KM
    assert np.linalg.norm(station.position(54123.4)) == pytest.approx(expected, rel=1e-12)
    # 自转速度与位置正交
    assert float(station.position(54123.4) @ station.velocity(54123.4)) == pytest.approx(0.0, abs=1e-18)


def test_unknown_station_rejected():
    with pytest.raises(InputParseError):
        StationCatalog().get("XYZ")


def test_bad_station_line_reports_line_number(tmp_path):
    path = tmp_path / "stations.txt"
    path.write_text("# code lon rho_cos rho_sin\n568 204.5 0.94 abc Mauna Kea\n", encoding="utf-8")
    with pytest.raises(InputParseError) as err:
        StationCatalog.load(path)
    assert err.value.line == 2


def test_earth_distance_and_speed():
    eph = KeplerianEarthEphemeris()
    for t in (54000.0, 54100.0, 54250.0):
        r, v = eph.earth_heliocentric(t)
        assert 0.98 < np.linalg.norm(r) < 1.02
        assert 0.0165 < np.linalg.norm(v) < 0.0176


def test_velocity_consistent_with_position():
    eph = KeplerianEarthEphemeris()
    t, h = 54003.3, 0.01
    _, v = eph.earth_heliocentric(t)
    r_plus, _ = eph.earth_heliocentric(t + h)
    r_minus, _ = eph.earth_heliocentric(t - h)
    np.testing.assert_allclose((r_plus - r_minus) / (2 * h), v, atol=1e-8)


def test_exact_ephemeris_conserves_angular_momentum(exact_eph):
    c = [np.cross(*exact_eph.earth_heliocentric(t)) for t in (54000.0, 54030.0, 54200.0)]
    np.testing.assert_allclose(c[1], c[0], rtol=1e-12)
    np.testing.assert_allclose(c[2], c[0], rtol=1e-12)


@pytest.mark.parametrize("frame", ["EQUJ2000", "ECLJ2000"])
def test_table_ephemeris_interpolates(tmp_path, exact_eph, frame):
    path = tmp_path / "earth.txt"
    write_ephemeris_table(exact_eph, 53990.0, 54020.0, 0.5, path, frame=frame)
    table = TableEphemeris(path)
    assert table.frame == frame
    for t in (54000.0, 54000.25, 54013.77):
        r_tab, v_tab = table.earth_heliocentric(t)
        r_ref, v_ref = exact_eph.earth_heliocentric(t)
        np.testing.assert_allclose(r_tab, r_ref, atol=1e-9)
        np.testing.assert_allclose(v_tab, v_ref, atol=1e-8)


def test_table_ephemeris_range_checked(tmp_path, exact_eph):
    path = tmp_path / "earth.txt"
    write_ephemeris_table(exact_eph, 54000.0, 54002.0, 1.0, path)
    table = TableEphemeris(path)
    with pytest.raises(ValueError):
        table.earth_heliocentric(54010.0)


def test_table_ephemeris_rejects_bad_shape(tmp_path):
    path = tmp_path / "earth.txt"
    path.write_text("# frame=EQUJ2000\n54000 1 0 0 0 0.017\n", encoding="utf-8")
    with pytest.raises(InputParseError):
        TableEphemeris(path)


def test_observer_state_adds_station_offset(data_dir):
    eph = default_ephemeris(data_dir / "stations.txt")
    t = 54001.2
    q_geo, _ = observer_state(eph, "500", t)
    q_top, qd_top = observer_state(eph, "F51", t)
    offset = np.linalg.norm(q_top - q_geo)
    assert 2e-5 < offset < 4.5e-5
    _, v_earth = eph.earth_heliocentric(t)
    assert np.linalg.norm(qd_top - v_earth) < 4e-4
