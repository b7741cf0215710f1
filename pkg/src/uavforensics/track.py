"""Flown-trajectory reconstruction, flight statistics and geo exports."""

from __future__ import annotations

import bisect
import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Optional, Sequence

from .evidence import GeoPoint
from .ulog import FlightLog, TimeSeries

EARTH_RADIUS_M = 6_371_000.0
JOIN_WINDOW_US = 50_000

GLOBAL_POSITION = "vehicle_global_position"
LOCAL_POSITION = "vehicle_local_position"
ATTITUDE = "vehicle_attitude"
GPS_SERIES = ("vehicle_gps_position", "sensor_gps")

SOURCE_FUSED = "fused"
SOURCE_FUSED_LOCAL = "fused-local"
SOURCE_GPS = "gps-fallback"

ESTIMATOR_GROUPS = {1: "LPE", 2: "EKF2", 3: "Q"}


class TrajectoryError(ValueError):
    pass


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class TrackSample:
    t_us: int
    position: GeoPoint
    local_ned_m: Optional[tuple[float, float, float]] = None
    velocity_mps: Optional[tuple[float, float, float]] = None
    attitude_quat: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self):
        q = self.attitude_quat
        if q is not None:
            norm = math.sqrt(sum(c * c for c in q))
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(f"attitude quaternion not unit length (norm {norm})")


@dataclass(frozen=True)
class Trajectory:
    samples: tuple[TrackSample, ...]
    source_note: str = SOURCE_FUSED
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        for a, b in zip(self.samples, self.samples[1:]):
            if b.t_us <= a.t_us:
                raise TrajectoryError(f"timestamps not strictly increasing at t={b.t_us}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def start_us(self) -> int:
        return self.samples[0].t_us

    @property
    def end_us(self) -> int:
        return self.samples[-1].t_us

    def reversed(self) -> "Trajectory":
        """Same path walked backwards (timestamps mirrored)."""
        if not self.samples:
            return self
        t0, t1 = self.start_us, self.end_us
        rev = []
        for s in reversed(self.samples):
            vel = None if s.velocity_mps is None else tuple(-v for v in s.velocity_mps)
            rev.append(TrackSample(t0 + t1 - s.t_us, s.position, s.local_ned_m, vel, s.attitude_quat))
        return Trajectory(tuple(rev), self.source_note, self.notes)


@dataclass(frozen=True)
class SpeedStats:
    avg: float
    max: float
    max_up: float
    max_down: float


@dataclass(frozen=True)
class FlightSummary:
    total_flight_time_s: float
    total_distance_m: float
    avg_speed_mps: float
    max_speed_mps: float
    max_up_speed_mps: float
    max_down_speed_mps: float
    max_tilt_deg: Optional[float]
    os_version: Optional[str]
    estimator: Optional[str]
    arming_offset_s: Optional[float]
    source_note: str = ""
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "total_flight_time_s": self.total_flight_time_s,
            "total_distance_m": self.total_distance_m,
            "avg_speed_mps": self.avg_speed_mps,
            "max_speed_mps": self.max_speed_mps,
            "max_up_speed_mps": self.max_up_speed_mps,
            "max_down_speed_mps": self.max_down_speed_mps,
            "max_tilt_deg": self.max_tilt_deg,
            "os_version": self.os_version,
            "estimator": self.estimator,
            "arming_offset_s": self.arming_offset_s,
            "source_note": self.source_note,
            "notes": list(self.notes),
        }


# -- geometry ---------------------------------------------------------------


def haversine_m(p: GeoPoint, q: GeoPoint) -> float:
    """Great-circle distance on a sphere of radius 6,371 km."""
    phi1 = math.radians(p.lat_deg)
    phi2 = math.radians(q.lat_deg)
    dphi = phi2 - phi1
    dlam = math.radians(q.lon_deg - p.lon_deg)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, a)))


def distance_3d_m(p: GeoPoint, q: GeoPoint) -> float:
    """Horizontal great-circle distance and altitude delta in quadrature."""
    h = haversine_m(p, q)
    if p.alt_m is None or q.alt_m is None:
        return h
    return math.hypot(h, q.alt_m - p.alt_m)


def ned_to_geo(ref: GeoPoint, north: float, east: float, down: float) -> GeoPoint:
    """Local tangent-plane offset to geodetic, spherical Earth."""
    lat = ref.lat_deg + math.degrees(north / EARTH_RADIUS_M)
    lon = ref.lon_deg + math.degrees(east / (EARTH_RADIUS_M * math.cos(math.radians(ref.lat_deg))))
    alt = None if ref.alt_m is None else ref.alt_m - down
    return GeoPoint.normalized(lat, lon, alt)


def segment_length_m(a: TrackSample, b: TrackSample) -> float:
    if a.local_ned_m is not None and b.local_ned_m is not None:
        return math.dist(a.local_ned_m, b.local_ned_m)
    return distance_3d_m(a.position, b.position)


def tilt_deg(q: Sequence[float]) -> float:
    """Angle between body z and world z for a unit quaternion (w, x, y, z).

    Equal to acos(1 - 2(x^2 + y^2)); evaluated through atan2 so that
    near-level attitudes keep full precision.
    """
    w, x, y, z = q
    return math.degrees(2.0 * math.atan2(math.hypot(x, y), math.hypot(w, z)))


# -- trajectory construction ------------------------------------------------


def _nearest(times: list[int], t: int) -> Optional[int]:
    i = bisect.bisect_left(times, t)
    best = None
    for j in (i - 1, i):
        if 0 <= j < len(times):
            d = abs(times[j] - t)
            if d <= JOIN_WINDOW_US and (best is None or d < abs(times[best] - t)):
                best = j
    return best


class _Joiner:
    def __init__(self, series: Optional[TimeSeries]):
        self.rows = series.rows if series is not None else []
        self.times = [r["timestamp"] for r in self.rows]

    def at(self, t: int) -> Optional[dict]:
        if not self.rows:
            return None
        j = _nearest(self.times, t)
        return None if j is None else self.rows[j]


def _finite(*vals) -> bool:
    return all(v is not None and isinstance(v, (int, float)) and math.isfinite(v) for v in vals)


def _quat(row: Optional[dict]):
    if row is None or "q[0]" not in row:
        return None
    q = tuple(float(row[f"q[{i}]"]) for i in range(4))
    if not _finite(*q):
        return None
    n = math.sqrt(sum(c * c for c in q))
    if n == 0:
        return None
    return tuple(c / n for c in q)


def _ned(row: Optional[dict]):
    if row is None or not all(k in row for k in ("x", "y", "z")):
        return None
    v = (float(row["x"]), float(row["y"]), float(row["z"]))
    return v if _finite(*v) else None


def _local_vel(row: Optional[dict]):
    if row is None or not all(k in row for k in ("vx", "vy", "vz")):
        return None
    v = (float(row["vx"]), float(row["vy"]), float(row["vz"]))
    return v if _finite(*v) else None


def _gps_position(row: dict) -> Optional[GeoPoint]:
    if "latitude_deg" in row:
        lat, lon = row["latitude_deg"], row["longitude_deg"]
        alt = row.get("altitude_msl_m")
    elif "lat" in row and "lon" in row:
        lat, lon = row["lat"] * 1e-7, row["lon"] * 1e-7
        alt = row["alt"] * 1e-3 if "alt" in row else None
    else:
        return None
    if not _finite(lat, lon):
        return None
    if alt is not None and not _finite(alt):
        alt = None
    return _point(lat, lon, alt)


def _point(lat, lon, alt) -> Optional[GeoPoint]:
    try:
        return GeoPoint.normalized(float(lat), float(lon), None if alt is None else float(alt))
    except ValueError:
        return None


def build_trajectory(log: FlightLog) -> Trajectory:
    """Fuse position, velocity and attitude series into one trajectory.

    Position comes from the estimator's global output when logged, else from
    its local output anchored at the reference point, else from raw GPS.
    Velocity and attitude are attached by nearest timestamp within 50 ms.
    """
    glob = log.find_series(GLOBAL_POSITION)
    local = log.find_series(LOCAL_POSITION)
    gps = next((s for s in (log.find_series(n) for n in GPS_SERIES) if s is not None and s.rows), None)
    att = _Joiner(log.find_series(ATTITUDE))
    loc = _Joiner(local)
    notes: list[str] = []
    samples: list[TrackSample] = []
    skipped = 0

    def push(t, pos, ned, vel, q):
        nonlocal skipped
        if samples and t <= samples[-1].t_us:
            skipped += 1
            return
        samples.append(TrackSample(t, pos, ned, vel, q))

    if glob is not None and glob.rows:
        source = SOURCE_FUSED
        for r in glob.rows:
            if not _finite(r.get("lat"), r.get("lon")):
                skipped += 1
                continue
            alt = r.get("alt")
            pos = _point(r["lat"], r["lon"], alt if _finite(alt) else None)
            if pos is None:
                skipped += 1
                continue
            lrow = loc.at(r["timestamp"])
            push(r["timestamp"], pos, _ned(lrow), _local_vel(lrow), _quat(att.at(r["timestamp"])))
    elif local is not None and local.rows and "ref_lat" in local.columns:
        source = SOURCE_FUSED_LOCAL
        for r in local.rows:
            ned = _ned(r)
            if ned is None or not _finite(r.get("ref_lat"), r.get("ref_lon")):
                skipped += 1
                continue
            ref_alt = r.get("ref_alt")
            ref = _point(r["ref_lat"], r["ref_lon"], ref_alt if _finite(ref_alt) else None)
            if ref is None:
                skipped += 1
                continue
            push(r["timestamp"], ned_to_geo(ref, *ned), ned, _local_vel(r), _quat(att.at(r["timestamp"])))
    elif gps is not None:
        source = SOURCE_GPS
        notes.append("no fused position series; trajectory built from raw GPS fixes")
        for r in gps.rows:
            pos = _gps_position(r)
            if pos is None:
                skipped += 1
                continue
            vel = None
            if all(k in r for k in ("vel_n_m_s", "vel_e_m_s", "vel_d_m_s")):
                v = (float(r["vel_n_m_s"]), float(r["vel_e_m_s"]), float(r["vel_d_m_s"]))
                vel = v if _finite(*v) else None
            push(r["timestamp"], pos, None, vel, _quat(att.at(r["timestamp"])))
    else:
        raise TrajectoryError("log contains no position series")

    if skipped:
        notes.append(f"{skipped} position record(s) skipped (invalid or non-increasing timestamp)")
    return Trajectory(tuple(samples), source, tuple(notes))


# -- statistics -------------------------------------------------------------


def total_distance(traj: Trajectory) -> float:
    s = traj.samples
    return math.fsum(segment_length_m(a, b) for a, b in zip(s, s[1:]))


def flight_time_s(traj: Trajectory) -> float:
    if len(traj) < 2:
        return 0.0
    return (traj.end_us - traj.start_us) / 1e6


def _vertical_down(a: TrackSample, b: TrackSample) -> Optional[float]:
    if a.local_ned_m is not None and b.local_ned_m is not None:
        return b.local_ned_m[2] - a.local_ned_m[2]
    if a.position.alt_m is not None and b.position.alt_m is not None:
        return a.position.alt_m - b.position.alt_m
    return None


def speed_stats(traj: Trajectory) -> SpeedStats:
    """(avg, max, max climb, max descent) in m/s.

    avg is distance over time. Maxima use logged velocities when present,
    otherwise per-segment finite differences of position.
    """
    s = traj.samples
    if len(s) < 2:
        return SpeedStats(0.0, 0.0, 0.0, 0.0)
    duration = flight_time_s(traj)
    avg = total_distance(traj) / duration if duration > 0 else 0.0
    vels = [x.velocity_mps for x in s if x.velocity_mps is not None]
    max_speed = max_up = max_down = 0.0
    if vels:
        for vn, ve, vd in vels:
            max_speed = max(max_speed, math.sqrt(vn * vn + ve * ve + vd * vd))
            max_up = max(max_up, -vd)
            max_down = max(max_down, vd)
    else:
        for a, b in zip(s, s[1:]):
            dt = (b.t_us - a.t_us) / 1e6
            max_speed = max(max_speed, segment_length_m(a, b) / dt)
            dz = _vertical_down(a, b)
            if dz is not None:
                max_up = max(max_up, -dz / dt)
                max_down = max(max_down, dz / dt)
    return SpeedStats(avg, max_speed, max_up, max_down)


def max_tilt(traj: Trajectory) -> Optional[float]:
    tilts = [tilt_deg(x.attitude_quat) for x in traj.samples if x.attitude_quat is not None]
    return max(tilts) if tilts else None


def os_version(log: FlightLog) -> Optional[str]:
    name = log.info.get("sys_os_name")
    ver = log.info.get("sys_os_ver_release")
    if isinstance(ver, int) and ver:
        text = f"v{(ver >> 24) & 0xFF}.{(ver >> 16) & 0xFF}.{(ver >> 8) & 0xFF}"
    else:
        text = log.info.get("sys_os_ver")
    parts = [p for p in (name, text) if p]
    return ", ".join(parts) if parts else None


def estimator_name(log: FlightLog) -> Optional[str]:
    if log.info.get("estimator"):
        return str(log.info["estimator"])
    group = log.parameters.get("SYS_MC_EST_GROUP")
    if group is None:
        return None
    return ESTIMATOR_GROUPS.get(int(group), f"group {group}")


def flight_summary(log: Optional[FlightLog], traj: Trajectory) -> FlightSummary:
    notes = list(traj.notes)
    if len(traj) < 2:
        notes.append("fewer than two trajectory samples; distance and speeds are zero")
    stats = speed_stats(traj)
    tilt = max_tilt(traj)
    if tilt is None:
        notes.append("no attitude data; max tilt not available")
    arming = None
    osv = est = None
    if log is not None:
        first = log.first_timestamp_us
        arming = first / 1e6 if first is not None else None
        osv = os_version(log)
        est = estimator_name(log)
        for d in log.dropouts:
            notes.append(f"logger dropout of {d.duration_ms} ms at t={d.timestamp_us} us; distance across it is kept")
        if log.truncated:
            notes.append(f"log truncated at byte offset {log.truncated_at}; statistics cover the salvaged part")
    elif traj.samples:
        arming = traj.start_us / 1e6
    if traj.samples and any(x.local_ned_m is None for x in traj.samples):
        distance_note = "3D: great-circle horizontal with altitude delta"
    else:
        distance_note = "3D: local NED position"
    return FlightSummary(
        total_flight_time_s=flight_time_s(traj),
        total_distance_m=total_distance(traj),
        avg_speed_mps=stats.avg,
        max_speed_mps=stats.max,
        max_up_speed_mps=stats.max_up,
        max_down_speed_mps=stats.max_down,
        max_tilt_deg=tilt,
        os_version=osv,
        estimator=est,
        arming_offset_s=arming,
        source_note=f"{traj.source_note}; distance {distance_note}",
        notes=tuple(notes),
    )


# -- exports ----------------------------------------------------------------


def _coord(p: GeoPoint) -> list[float]:
    c = [p.lon_deg, p.lat_deg]
    if p.alt_m is not None:
        c.append(p.alt_m)
    return c


def _line_or_point(points: list[GeoPoint]) -> dict:
    if len(points) == 1:
        return {"type": "Point", "coordinates": _coord(points[0])}
    return {"type": "LineString", "coordinates": [_coord(p) for p in points]}


def export_geojson(traj: Trajectory, plan=None, geotags: Sequence = ()) -> bytes:
    """RFC 7946 FeatureCollection with the flown track, optional planned path,
    takeoff/last-position markers and geotagged media."""
    if not traj.samples:
        raise ExportError("cannot export an empty trajectory")
    points = [s.position for s in traj.samples]
    features = [
        {
            "type": "Feature",
            "properties": {
                "role": "flown",
                "source": traj.source_note,
                "t_start_us": traj.start_us,
                "t_end_us": traj.end_us,
            },
            "geometry": _line_or_point(points),
        }
    ]
    if plan is not None:
        planned = plan.polyline()
        if planned:
            features.append(
                {"type": "Feature", "properties": {"role": "planned"}, "geometry": _line_or_point(planned)}
            )
    features.append(
        {
            "type": "Feature",
            "properties": {"role": "takeoff", "t_us": traj.start_us},
            "geometry": {"type": "Point", "coordinates": _coord(points[0])},
        }
    )
    features.append(
        {
            "type": "Feature",
            "properties": {"role": "last_position", "t_us": traj.end_us},
            "geometry": {"type": "Point", "coordinates": _coord(points[-1])},
        }
    )
    for g in geotags:
        if g.position is None:
            continue
        features.append(
            {
                "type": "Feature",
                "properties": {"role": "media", "file": g.file_name, "t_us": g.t_log_us, "confidence": g.confidence.value},
                "geometry": {"type": "Point", "coordinates": _coord(g.position)},
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


def _num(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def _kml_coords(points: list[GeoPoint]) -> str:
    out = []
    for p in points:
        c = f"{_num(p.lon_deg)},{_num(p.lat_deg)}"
        if p.alt_m is not None:
            c += f",{_num(p.alt_m)}"
        out.append(c)
    return "\n".join(out)


def export_kml(traj: Trajectory, name: str = "flight", geotags: Sequence = ()) -> bytes:
    """KML 2.2 document: the flown track as one absolute-altitude LineString."""
    if not traj.samples:
        raise ExportError("cannot export an empty trajectory")
    ns = "http://www.opengis.net/kml/2.2"
    ET.register_namespace("", ns)
    kml = ET.Element(f"{{{ns}}}kml")
    doc = ET.SubElement(kml, f"{{{ns}}}Document")
    ET.SubElement(doc, f"{{{ns}}}name").text = name
    pm = ET.SubElement(doc, f"{{{ns}}}Placemark")
    ET.SubElement(pm, f"{{{ns}}}name").text = "flown"
    ls = ET.SubElement(pm, f"{{{ns}}}LineString")
    ET.SubElement(ls, f"{{{ns}}}altitudeMode").text = "absolute"
    ET.SubElement(ls, f"{{{ns}}}coordinates").text = _kml_coords([s.position for s in traj.samples])
    for g in geotags:
        if g.position is None:
            continue
        gp = ET.SubElement(doc, f"{{{ns}}}Placemark")
        ET.SubElement(gp, f"{{{ns}}}name").text = g.file_name
        pt = ET.SubElement(gp, f"{{{ns}}}Point")
        ET.SubElement(pt, f"{{{ns}}}altitudeMode").text = "absolute"
        ET.SubElement(pt, f"{{{ns}}}coordinates").text = _kml_coords([g.position])
    ET.indent(kml, space=" ")
    return b'<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(kml, encoding="utf-8", xml_declaration=False) + b"\n"
