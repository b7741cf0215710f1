import json
import math
import random
import xml.etree.ElementTree as ET

import pytest

from uavforensics import synthetic
from uavforensics.evidence import GeoPoint
from uavforensics.track import (
    EARTH_RADIUS_M,
    SOURCE_FUSED,
    SOURCE_FUSED_LOCAL,
    SOURCE_GPS,
    ExportError,
    TrackSample,
    Trajectory,
    TrajectoryError,
    build_trajectory,
    export_geojson,
    export_kml,
    flight_summary,
    haversine_m,
    max_tilt,
    speed_stats,
    tilt_deg,
    total_distance,
)
from uavforensics.ulog import Field, FlightLog, ParameterSet, Subscription, TimeSeries


def qmul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def axis_angle(axis, angle_rad):
    n = math.sqrt(sum(c * c for c in axis))
    s = math.sin(angle_rad / 2)
    return (math.cos(angle_rad / 2),) + tuple(c / n * s for c in axis)


def equator_track(speed_mps, seconds, step_s=1.0, alt=50.0):
    """Eastward along the equator; longitude advances by v*t/R radians."""
    samples = []
    n = int(round(seconds / step_s))
    for k in range(n + 1):
        t = k * step_s
        lon = math.degrees(speed_mps * t / EARTH_RADIUS_M)
        samples.append(TrackSample(int(round(t * 1e6)), GeoPoint(0.0, lon, alt)))
    return Trajectory(tuple(samples))


def global_log(rows, extra_series=None):
    fields = (Field("uint64_t", "timestamp"), Field("double", "lat"), Field("double", "lon"), Field("float", "alt"))
    cols = ("timestamp", "lat", "lon", "alt")
    log = FlightLog(
        formats={"vehicle_global_position": fields},
        subscriptions=[Subscription(0, "vehicle_global_position")],
        series={("vehicle_global_position", 0): TimeSeries("vehicle_global_position", 0, cols, rows)},
    )
    for name, fields2, cols2, rows2 in extra_series or ():
        log.formats[name] = fields2
        log.subscriptions.append(Subscription(len(log.subscriptions), name))
        log.series[(name, 0)] = TimeSeries(name, 0, cols2, rows2)
    return log


class TestGeometry:
    def test_one_degree_on_equator(self):
        d = haversine_m(GeoPoint(0.0, 0.0), GeoPoint(0.0, 1.0))
        assert d == pytest.approx(EARTH_RADIUS_M * math.pi / 180, rel=1e-12)
        assert abs(d - 111_195) / 111_195 <= 0.0005

    def test_meridian_quarter(self):
        d = haversine_m(GeoPoint(0.0, 10.0), GeoPoint(90.0, 10.0))
        assert d == pytest.approx(EARTH_RADIUS_M * math.pi / 2, rel=1e-12)

    def test_antimeridian(self):
        d = haversine_m(GeoPoint(0.0, 179.5), GeoPoint(0.0, -179.5))
        assert d == pytest.approx(EARTH_RADIUS_M * math.radians(1.0), rel=1e-9)

    def test_straight_line_distance(self):
        traj = equator_track(7.5, 120.0, step_s=0.5)
        assert abs(total_distance(traj) - 7.5 * 120.0) / 900.0 <= 0.001

    def test_two_metres_per_second_for_100_s(self):
        assert abs(total_distance(equator_track(2.0, 100.0)) - 200.0) / 200.0 <= 0.001

    def test_identical_points(self):
        p = GeoPoint(10.0, 20.0, 5.0)
        assert total_distance(Trajectory((TrackSample(0, p), TrackSample(1, p)))) == 0.0

    def test_reversal_keeps_distance(self):
        traj = equator_track(3.0, 30.0)
        assert total_distance(traj.reversed()) == pytest.approx(total_distance(traj), rel=1e-12)

    def test_single_sample(self):
        traj = equator_track(1.0, 0.0)
        assert total_distance(traj) == 0.0
        s = flight_summary(None, traj)
        assert s.total_flight_time_s == 0.0
        assert any("fewer than two" in n for n in s.notes)


class TestTilt:
    @pytest.mark.parametrize("deg", [0.0, 0.001, 5.0, 19.8, 45.0, 90.0, 135.0, 179.9])
    def test_roll_about_north(self, deg):
        assert tilt_deg(axis_angle((1, 0, 0), math.radians(deg))) == pytest.approx(deg, abs=1e-9)

    @pytest.mark.parametrize("deg", [1.0, 30.0, 60.0])
    def test_about_horizontal_diagonal(self, deg):
        assert tilt_deg(axis_angle((1, -2, 0), math.radians(deg))) == pytest.approx(deg, abs=1e-9)

    def test_identity(self):
        assert tilt_deg((1.0, 0.0, 0.0, 0.0)) == 0.0

    def test_pure_pitch_thirty(self):
        h = math.radians(30.0) / 2
        assert tilt_deg((math.cos(h), 0.0, math.sin(h), 0.0)) == pytest.approx(30.0, abs=1e-9)

    def test_pure_yaw_is_level(self):
        assert tilt_deg(axis_angle((0, 0, 1), 2.5)) == pytest.approx(0.0, abs=1e-12)

    def test_yaw_invariance(self):
        rng = random.Random(7)
        for _ in range(100):
            q = tuple(rng.gauss(0, 1) for _ in range(4))
            n = math.sqrt(sum(c * c for c in q))
            q = tuple(c / n for c in q)
            yaw = axis_angle((0, 0, 1), rng.uniform(-math.pi, math.pi))
            assert tilt_deg(qmul(yaw, q)) == pytest.approx(tilt_deg(q), abs=1e-9)

    def test_non_unit_quaternion_rejected(self):
        with pytest.raises(ValueError):
            TrackSample(0, GeoPoint(0, 0), attitude_quat=(1.0, 0.1, 0.0, 0.0))

    def test_max_tilt(self):
        samples = [
            TrackSample(i, GeoPoint(0, 0), attitude_quat=axis_angle((0, 1, 0), math.radians(a)))
            for i, a in enumerate([2.0, 19.8, 7.0])
        ]
        assert max_tilt(Trajectory(tuple(samples))) == pytest.approx(19.8, abs=1e-9)


class TestSpeeds:
    def test_from_positions(self):
        traj = equator_track(4.0, 10.0)
        st = speed_stats(traj)
        assert st.avg == pytest.approx(4.0, rel=1e-6)
        assert st.max == pytest.approx(4.0, rel=1e-6)
        assert st.avg <= st.max + 1e-12

    def test_hover(self):
        samples = [TrackSample(k * 100_000, GeoPoint(1.0, 1.0, 20.0), velocity_mps=(0.0, 0.0, 0.0)) for k in range(50)]
        st = speed_stats(Trajectory(tuple(samples)))
        assert (st.avg, st.max, st.max_up, st.max_down) == (0.0, 0.0, 0.0, 0.0)

    def test_climb_then_descent(self):
        # 10 s up at 2.8 m/s, then down at 1.25 m/s, positions only
        alts = [2.8 * k for k in range(11)] + [28.0 - 1.25 * k for k in range(1, 11)]
        samples = [TrackSample(k * 1_000_000, GeoPoint(0.0, 0.0, a)) for k, a in enumerate(alts)]
        st = speed_stats(Trajectory(tuple(samples)))
        assert st.max_up == pytest.approx(2.8, abs=1e-6)
        assert st.max_down == pytest.approx(1.25, abs=1e-6)

    def test_constant_horizontal_leg(self):
        st = speed_stats(equator_track(5.06, 30.0, step_s=0.1))
        assert st.max == pytest.approx(5.06, abs=1e-6)

    def test_vertical_rates_from_altitude(self):
        samples = [TrackSample(k * 1_000_000, GeoPoint(0, 0, 100.0 + a)) for k, a in enumerate([0, 3, 6, 4])]
        st = speed_stats(Trajectory(tuple(samples)))
        assert st.max_up == pytest.approx(3.0)
        assert st.max_down == pytest.approx(2.0)

    def test_logged_velocity_preferred(self):
        samples = [
            TrackSample(0, GeoPoint(0, 0, 10), velocity_mps=(3.0, 4.0, -1.0)),
            TrackSample(1_000_000, GeoPoint(0, 0, 10), velocity_mps=(0.0, 0.0, 2.0)),
        ]
        st = speed_stats(Trajectory(tuple(samples)))
        assert st.max == pytest.approx(math.sqrt(26))
        assert st.max_up == pytest.approx(1.0)
        assert st.max_down == pytest.approx(2.0)


class TestBuildTrajectory:
    def test_non_increasing_timestamps_rejected(self):
        with pytest.raises(TrajectoryError):
            Trajectory((TrackSample(5, GeoPoint(0, 0)), TrackSample(5, GeoPoint(0, 0))))

    def test_no_position_series(self):
        with pytest.raises(TrajectoryError):
            build_trajectory(FlightLog())

    def test_global_source_and_attitude_join_window(self):
        att_fields = (Field("uint64_t", "timestamp"), Field("float", "q", 4))
        att_cols = ("timestamp", "q[0]", "q[1]", "q[2]", "q[3]")
        rows = [{"timestamp": t, "lat": 1.0, "lon": 2.0 + t * 1e-12, "alt": 10.0} for t in (0, 1_000_000)]
        att = [
            {"timestamp": 40_000, "q[0]": 1.0, "q[1]": 0.0, "q[2]": 0.0, "q[3]": 0.0},  # within 50 ms of t=0
            {"timestamp": 1_060_000, "q[0]": 1.0, "q[1]": 0.0, "q[2]": 0.0, "q[3]": 0.0},  # 60 ms off
        ]
        log = global_log(rows, [("vehicle_attitude", att_fields, att_cols, att)])
        traj = build_trajectory(log)
        assert traj.source_note == SOURCE_FUSED
        assert traj.samples[0].attitude_quat == (1.0, 0.0, 0.0, 0.0)
        assert traj.samples[1].attitude_quat is None

    def test_invalid_rows_skipped_with_note(self):
        rows = [
            {"timestamp": 0, "lat": 1.0, "lon": 2.0, "alt": 10.0},
            {"timestamp": 1, "lat": float("nan"), "lon": 2.0, "alt": 10.0},
            {"timestamp": 2, "lat": 91.0, "lon": 2.0, "alt": 10.0},
            {"timestamp": 3, "lat": 1.0, "lon": 2.0, "alt": 10.0},
        ]
        traj = build_trajectory(global_log(rows))
        assert [s.t_us for s in traj.samples] == [0, 3]
        assert any("2 position record" in n for n in traj.notes)

    def test_local_position_with_reference(self):
        fields = tuple(Field("float", c) for c in ("x", "y", "z")) + (Field("double", "ref_lat"), Field("double", "ref_lon"))
        fields = (Field("uint64_t", "timestamp"),) + fields
        cols = ("timestamp", "x", "y", "z", "ref_lat", "ref_lon")
        rows = [dict(zip(cols, (k * 100_000, float(k), 0.0, 0.0, 0.0, 0.0))) for k in range(11)]
        log = FlightLog(
            formats={"vehicle_local_position": fields},
            subscriptions=[Subscription(0, "vehicle_local_position")],
            series={("vehicle_local_position", 0): TimeSeries("vehicle_local_position", 0, cols, rows)},
        )
        traj = build_trajectory(log)
        assert traj.source_note == SOURCE_FUSED_LOCAL
        assert total_distance(traj) == pytest.approx(10.0)
        assert traj.samples[-1].position.lat_deg == pytest.approx(math.degrees(10.0 / EARTH_RADIUS_M))

    def test_gps_fallback(self):
        fields = (Field("uint64_t", "timestamp"), Field("int32_t", "lat"), Field("int32_t", "lon"), Field("int32_t", "alt"))
        cols = ("timestamp", "lat", "lon", "alt")
        rows = [
            {"timestamp": 0, "lat": 0, "lon": 0, "alt": 5000},
            {"timestamp": 1_000_000, "lat": 0, "lon": 10_000_000, "alt": 5000},
        ]
        log = FlightLog(
            formats={"vehicle_gps_position": fields},
            subscriptions=[Subscription(0, "vehicle_gps_position")],
            series={("vehicle_gps_position", 0): TimeSeries("vehicle_gps_position", 0, cols, rows)},
        )
        traj = build_trajectory(log)
        assert traj.source_note == SOURCE_GPS
        assert traj.notes and "raw GPS" in traj.notes[0]
        assert traj.samples[1].position.alt_m == pytest.approx(5.0)
        assert total_distance(traj) == pytest.approx(EARTH_RADIUS_M * math.pi / 180)


class TestSummary:
    def test_constructed_flight(self):
        from uavforensics.ulog import parse_ulog, write_ulog

        log = parse_ulog(write_ulog(synthetic.flight_log()))
        s = flight_summary(log, build_trajectory(log))
        assert s.os_version == "NuttX, v11.0.0"
        assert s.estimator == "EKF2"
        assert s.arming_offset_s == 481.0
        assert s.avg_speed_mps <= s.max_speed_mps

    def test_estimator_from_info_wins(self):
        log = global_log([{"timestamp": 0, "lat": 0.0, "lon": 0.0, "alt": 0.0}])
        log.info["estimator"] = "custom"
        log.parameters = ParameterSet(initial={"SYS_MC_EST_GROUP": 2})
        assert flight_summary(log, build_trajectory(log)).estimator == "custom"

    def test_dropout_and_truncation_notes(self):
        from uavforensics.ulog import Dropout

        log = global_log([{"timestamp": 0, "lat": 0.0, "lon": 0.0, "alt": 0.0}])
        log.dropouts.append(Dropout(0, 120))
        log.truncated, log.truncated_at = True, 999
        notes = flight_summary(log, build_trajectory(log)).notes
        assert any("120 ms" in n for n in notes)
        assert any("999" in n for n in notes)


class TestExports:
    def test_geojson_shape(self):
        shapely_geometry = pytest.importorskip("shapely.geometry")
        traj = equator_track(2.0, 5.0)
        doc = json.loads(export_geojson(traj))
        assert doc["type"] == "FeatureCollection"
        flown = next(f for f in doc["features"] if f["properties"]["role"] == "flown")
        line = shapely_geometry.shape(flown["geometry"])
        assert line.geom_type == "LineString"
        assert len(line.coords) == len(traj)
        lon, lat, alt = flown["geometry"]["coordinates"][-1]
        assert (lat, lon, alt) == (0.0, traj.samples[-1].position.lon_deg, 50.0)
        roles = [f["properties"]["role"] for f in doc["features"]]
        assert roles == ["flown", "takeoff", "last_position"]

    def test_kml_coordinates(self):
        traj = equator_track(2.0, 2.0)
        root = ET.fromstring(export_kml(traj, name="t"))
        ns = {"k": "http://www.opengis.net/kml/2.2"}
        coords = root.find(".//k:LineString/k:coordinates", ns).text.split()
        assert len(coords) == 3
        assert coords[0] == "0,0,50"
        assert root.find(".//k:altitudeMode", ns).text == "absolute"

    def test_empty_trajectory(self):
        with pytest.raises(ExportError):
            export_geojson(Trajectory(()))
        with pytest.raises(ExportError):
            export_kml(Trajectory(()))

    def test_exports_are_deterministic(self):
        traj = equator_track(2.0, 5.0)
        assert export_geojson(traj) == export_geojson(traj)
        assert export_kml(traj) == export_kml(traj)
