"""Constructed evidence for a reconnaissance-style quadrotor flight.

Builds a flight log, mission plan, battery observation, component record
and camera images whose true statistics are known by construction, and
writes them out as a case directory. Used by the test-suite and by
``tools/make_fixture_case.py``.

The vehicle takes off from ``HOME``, flies north at 5.06 m/s, then a taxiway
pattern at 2 m/s with 5 s holds facing south, and the log stops 15 m short
of the tenth mission item (the vehicle never returns).
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .evidence import GeoPoint
from .track import ned_to_geo
from .ulog import Field, FlightLog, LoggedText, ParameterSet, Subscription, TimeSeries, UlogHeader, write_ulog

HOME = GeoPoint(26.51, 80.23, 125.0)
ARMED_AT_US = 481_000_000
STEP_US = 100_000
LOG_EPOCH_UTC = datetime(2023, 3, 14, 9, 0, 0, tzinfo=timezone.utc)
GUST_TILT_DEG = 19.8
CRUISE_TILT_DEG = 4.0
HOVER_TILT_DEG = 1.0

# (steps of 0.1 s, north m/s, east m/s, down m/s, heading deg or None for along-track)
LEGS = (
    (36, 0.0, 0.0, -2.8, 0.0),  # climb to 10.08 m
    (109, 5.06, 0.0, 0.0, None),  # runway north to item 2
    (300, 0.0, 2.0, 0.0, None),  # east to item 4
    (225, -2.0, 0.0, 0.0, None),  # south to item 5
    (40, 0.0, 0.0, 1.25, 180.0),  # descend 5 m
    (150, 0.0, 2.0, 0.0, None),  # to item 6
    (50, 0.0, 0.0, 0.0, 180.0),  # hold
    (175, 0.0, 2.0, 0.0, None),  # to item 8
    (50, 0.0, 0.0, 0.0, 180.0),  # hold
    (175, 0.0, 2.0, 0.0, None),  # to item 9 (loiter)
    (50, 0.0, 0.0, 0.0, 180.0),  # hold
    (100, 0.0, 2.0, 0.0, None),  # 20 m of the 35 m leg to item 10
)
GUST_STEP = 36 + 109 + 150  # halfway along the leg to item 4

# Mission items as (north, east, relative altitude) in metres.
WP2 = (55.154, 0.0, 10.0)
WP4 = (55.154, 60.0, 10.0)
WP5 = (10.154, 60.0, 10.0)
WP6 = (10.154, 90.0, 5.0)
WP8 = (10.154, 125.0, 5.0)
WP9 = (10.154, 160.0, 5.0)
WP10 = (10.154, 195.0, 5.0)

PARAMETERS = {
    "COM_LOW_BAT_ACT": 0,
    "BAT_LOW_THR": 0.15,
    "COM_OBS_AVOID": 0,
    "NAV_RCL_ACT": 2,
    "COM_RC_LOSS_T": 2.0,
    "NAV_DLL_ACT": 0,
    "GF_ACTION": 0,
    "RTL_RETURN_ALT": 30.0,
    "RTL_LAND_DELAY": 0.0,
    "MPC_LAND_SPEED": 0.7,
    "SDLOG_MODE": 0,
    "COM_ARM_MIS_REQ": 0,
    "COM_ARM_WO_GPS": 1,
    "COM_FLTMODE1": 8,
    "COM_FLTMODE4": 1,
    "COM_FLTMODE6": 3,
    "MIS_LTRMIN_ALT": 10.0,
    "MPC_TILTMAX_AIR": 45.0,
    "MPC_TKO_SPEED": 1.5,
    "MPC_XY_CRUISE": 5.0,
    "MPC_Z_VEL_MAX_DN": 1.0,
    "MPC_Z_VEL_MAX_UP": 3.0,
    "FD_ESCS_EN": 1,
    "GPS_1_GNSS": 0,
    "GPS_1_PROTOCOL": 1,
    "MAV_TYPE": 2,
    "PWM_AUX_RATE": 50,
    "SDLOG_BOOT_BAT": 0,
    "SYS_AUTOCONFIG": 0,
    "SYS_MC_EST_GROUP": 2,
}

BATTERY_DOCUMENT = {
    "battery": {"cell_count": 4, "capacity_mah": 6500, "full_voltage_v": 16.8, "empty_voltage_v": 13.55},
    "observation": {"observed_voltage_v": 16.2},
    "power_model": {"per_motor_cruise_w": 94, "motor_count": 4, "avionics_w": 5, "cruise_speed_mps": 2},
}

COMPONENTS = [
    {"component": "frame", "description": "Custom carbon fibre frame, X quadrotor configuration", "dimension_cm": 60},
    {"component": "motor", "description": "KDE 2814XF 775KV (x4)"},
    {"component": "esc", "description": "KDEXF-UAS35"},
    {"component": "propeller", "description": "12x6 hard plastic"},
    {"component": "battery", "description": "LiPo 4s 6500mAh"},
    {"component": "autopilot", "description": "Pixhawk Cube Orange"},
    {"component": "gps", "description": "Here2 GPS"},
    {"component": "radio_receiver", "description": "FrSky X8R"},
    {"component": "telemetry", "description": "RFD900"},
    {"component": "camera", "description": "SJCAM SJ4000 HD", "mass_g": None},
    {"component": "other", "description": "All-up vehicle", "mass_g": 2360},
]

# (file name, seconds after power-on or None for no capture time)
IMAGES = (
    ("IMG_0001.jpg", 300),  # on the ground, before arming
    ("IMG_0002.jpg", 520),  # on the leg to item 4
    ("IMG_0003.jpg", 590),  # holding at item 8
    ("IMG_0004.jpg", None),  # metadata stripped
)


def f32(x: float) -> float:
    return struct.unpack("<f", struct.pack("<f", x))[0]


@dataclass(frozen=True)
class Truth:
    """Statistics of the constructed flight, computed from the leg table."""

    first_sample_s: float
    duration_s: float
    distance_m: float
    avg_speed_mps: float
    max_speed_mps: float
    max_up_mps: float
    max_down_mps: float
    max_tilt_deg: float


def truth() -> Truth:
    steps = sum(leg[0] for leg in LEGS)
    dist = math.fsum(n * 0.1 * math.sqrt(vn * vn + ve * ve + vd * vd) for n, vn, ve, vd, _ in LEGS)
    duration = steps * 0.1
    return Truth(
        first_sample_s=ARMED_AT_US / 1e6,
        duration_s=duration,
        distance_m=dist,
        avg_speed_mps=dist / duration,
        max_speed_mps=max(math.sqrt(vn * vn + ve * ve + vd * vd) for _, vn, ve, vd, _ in LEGS),
        max_up_mps=max(-vd for *_, vd, _ in LEGS),
        max_down_mps=max(vd for *_, vd, _ in LEGS),
        max_tilt_deg=GUST_TILT_DEG,
    )


def _leg_starts():
    """NED position at the start of each leg, plus the final position."""
    pos = [(0.0, 0.0, 0.0)]
    for steps, vn, ve, vd, _ in LEGS:
        n, e, d = pos[-1]
        pos.append((n + vn * steps / 10, e + ve * steps / 10, d + vd * steps / 10))
    return pos


def _states():
    """(t_us, (n, e, d), (vn, ve, vd), heading_deg, tilt_deg) per 0.1 s step."""
    starts = _leg_starts()
    out = []
    k = 0
    for (steps, vn, ve, vd, heading), (n0, e0, d0) in zip(LEGS, starts):
        if heading is None:
            heading = math.degrees(math.atan2(ve, vn)) % 360.0
        for j in range(steps):
            tilt = CRUISE_TILT_DEG if (vn or ve) else HOVER_TILT_DEG
            if k == GUST_STEP:
                tilt = GUST_TILT_DEG
            pos = (n0 + vn * j / 10, e0 + ve * j / 10, d0 + vd * j / 10)
            out.append((ARMED_AT_US + k * STEP_US, pos, (vn, ve, vd), heading, tilt))
            k += 1
    _, vn, ve, vd, _ = LEGS[-1]
    out.append((ARMED_AT_US + k * STEP_US, starts[-1], (vn, ve, vd), out[-1][3], CRUISE_TILT_DEG))
    return out


def quaternion(heading_deg: float, tilt_deg: float) -> tuple[float, float, float, float]:
    """Yaw about down, then pitch about the body y axis."""
    h = math.radians(heading_deg) / 2
    t = math.radians(tilt_deg) / 2
    return (math.cos(h) * math.cos(t), -math.sin(h) * math.sin(t), math.cos(h) * math.sin(t), math.sin(h) * math.cos(t))


FORMATS = {
    "vehicle_local_position": (
        Field("uint64_t", "timestamp"),
        Field("float", "x"),
        Field("float", "y"),
        Field("float", "z"),
        Field("float", "vx"),
        Field("float", "vy"),
        Field("float", "vz"),
        Field("double", "ref_lat"),
        Field("double", "ref_lon"),
        Field("float", "ref_alt"),
    ),
    "vehicle_global_position": (
        Field("uint64_t", "timestamp"),
        Field("double", "lat"),
        Field("double", "lon"),
        Field("float", "alt"),
    ),
    "vehicle_attitude": (Field("uint64_t", "timestamp"), Field("float", "q", 4)),
    "vehicle_gps_position": (
        Field("uint64_t", "timestamp"),
        Field("uint64_t", "time_utc_usec"),
        Field("int32_t", "lat"),
        Field("int32_t", "lon"),
        Field("int32_t", "alt"),
        Field("float", "vel_n_m_s"),
        Field("float", "vel_e_m_s"),
        Field("float", "vel_d_m_s"),
        Field("uint8_t", "fix_type"),
        Field("uint8_t", "satellites_used"),
    ),
}
_COLUMNS = {
    "vehicle_local_position": ("timestamp", "x", "y", "z", "vx", "vy", "vz", "ref_lat", "ref_lon", "ref_alt"),
    "vehicle_global_position": ("timestamp", "lat", "lon", "alt"),
    "vehicle_attitude": ("timestamp", "q[0]", "q[1]", "q[2]", "q[3]"),
    "vehicle_gps_position": (
        "timestamp",
        "time_utc_usec",
        "lat",
        "lon",
        "alt",
        "vel_n_m_s",
        "vel_e_m_s",
        "vel_d_m_s",
        "fix_type",
        "satellites_used",
    ),
}


def _param_values() -> dict:
    return {k: (f32(v) if isinstance(v, float) else v) for k, v in PARAMETERS.items()}


def flight_log() -> FlightLog:
    """The constructed log, with every value already at its stored precision."""
    rows = {name: [] for name in FORMATS}
    for i, (t, (n, e, d), (vn, ve, vd), heading, tilt) in enumerate(_states()):
        geo = ned_to_geo(HOME, n, e, d)
        rows["vehicle_local_position"].append(
            {
                "timestamp": t,
                "x": f32(n),
                "y": f32(e),
                "z": f32(d),
                "vx": f32(vn),
                "vy": f32(ve),
                "vz": f32(vd),
                "ref_lat": HOME.lat_deg,
                "ref_lon": HOME.lon_deg,
                "ref_alt": f32(HOME.alt_m),
            }
        )
        rows["vehicle_global_position"].append(
            {"timestamp": t, "lat": geo.lat_deg, "lon": geo.lon_deg, "alt": f32(geo.alt_m)}
        )
        q = quaternion(heading, tilt)
        rows["vehicle_attitude"].append(
            {"timestamp": t + 3_000, **{f"q[{j}]": f32(c) for j, c in enumerate(q)}}
        )
        if i % 2 == 0:
            rows["vehicle_gps_position"].append(
                {
                    "timestamp": t + 7_000,
                    "time_utc_usec": _epoch_us() + t + 7_000,
                    "lat": round(geo.lat_deg * 1e7),
                    "lon": round(geo.lon_deg * 1e7),
                    "alt": round(geo.alt_m * 1000),
                    "vel_n_m_s": f32(vn),
                    "vel_e_m_s": f32(ve),
                    "vel_d_m_s": f32(vd),
                    "fix_type": 3,
                    "satellites_used": 14,
                }
            )
    series = {}
    subs = []
    for msg_id, name in enumerate(FORMATS):
        series[(name, 0)] = TimeSeries(name, 0, _COLUMNS[name], rows[name])
        subs.append(Subscription(msg_id, name, 0))
    return FlightLog(
        header=UlogHeader(1, 0),
        parameters=ParameterSet.from_values(_param_values()),
        formats=dict(FORMATS),
        subscriptions=subs,
        series=series,
        logged_text=[
            LoggedText(ARMED_AT_US, 6, "[commander] Armed by RC"),
            LoggedText(ARMED_AT_US + 500_000, 6, "[navigator] Executing Mission"),
        ],
        info={
            "sys_name": "PX4",
            "ver_hw": "CUBEPILOT_CUBEORANGE",
            "sys_os_name": "NuttX",
            "sys_os_ver_release": 0x0B0000FF,
            "sys_mcu": "STM32H7",
        },
    )


def _epoch_us() -> int:
    return (LOG_EPOCH_UTC - datetime(1970, 1, 1, tzinfo=timezone.utc)) // timedelta(microseconds=1)


def _item(seq, command, params, frame=3):
    return {
        "autoContinue": True,
        "command": command,
        "doJumpId": seq + 1,
        "frame": frame,
        "params": params,
        "type": "SimpleItem",
    }


def _wp(seq, ned_alt, hold=0, yaw=None):
    n, e, alt = ned_alt
    g = ned_to_geo(HOME, n, e, 0.0)
    return _item(seq, 16, [hold, 0, 0, yaw, g.lat_deg, g.lon_deg, alt])


def mission_plan_document() -> dict:
    items = [
        _item(0, 22, [0, 0, 0, None, HOME.lat_deg, HOME.lon_deg, 10]),
        _item(1, 178, [1, 5, -1, 0, 0, 0, 0], frame=2),
        _wp(2, WP2),
        _item(3, 178, [1, 2, -1, 0, 0, 0, 0], frame=2),
        _wp(4, WP4),
        _wp(5, WP5),
        _wp(6, WP6, hold=5, yaw=180),
        _item(7, 115, [180, 0, 1, 0, 0, 0, 0], frame=2),
        _wp(8, WP8, hold=5, yaw=180),
    ]
    g9 = ned_to_geo(HOME, WP9[0], WP9[1], 0.0)
    items.append(_item(9, 19, [5, 0, 0, None, g9.lat_deg, g9.lon_deg, WP9[2]]))
    items.append(_wp(10, WP10, hold=5, yaw=180))
    items.append(_item(11, 20, [0, 0, 0, 0, 0, 0, 0], frame=2))
    return {
        "fileType": "Plan",
        "groundStation": "QGroundControl",
        "version": 1,
        "geoFence": {"circles": [], "polygons": [], "version": 2},
        "rallyPoints": {"points": [], "version": 2},
        "mission": {
            "cruiseSpeed": 5,
            "firmwareType": 12,
            "hoverSpeed": 5,
            "plannedHomePosition": [HOME.lat_deg, HOME.lon_deg, HOME.alt_m],
            "vehicleType": 2,
            "version": 2,
            "items": items,
        },
    }


def jpeg_with_capture_time(when, seed: int) -> bytes:
    """A tiny deterministic JPEG, with DateTimeOriginal when ``when`` is given."""
    from PIL import Image

    shade = hashlib.sha256(str(seed).encode()).digest()[:3]
    im = Image.new("RGB", (16, 12), tuple(shade))
    buf = io.BytesIO()
    if when is None:
        im.save(buf, "JPEG", quality=80)
    else:
        exif = Image.Exif()
        stamp = when.strftime("%Y:%m:%d %H:%M:%S")
        exif[306] = stamp
        exif.get_ifd(0x8769)[36867] = stamp
        im.save(buf, "JPEG", quality=80, exif=exif.tobytes())
    return buf.getvalue()


def write_case(case_dir, with_media: bool = True) -> Path:
    """Lay out the full case directory (``<kind>/<file>``) and return it."""
    case = Path(case_dir)
    files = {
        "flight_log/flight.ulg": write_ulog(flight_log()),
        "mission_plan/mission.plan": (json.dumps(mission_plan_document(), indent=4) + "\n").encode(),
        "battery_observation/battery.json": (json.dumps(BATTERY_DOCUMENT, indent=2) + "\n").encode(),
        "component_record/components.json": (json.dumps({"components": COMPONENTS}, indent=2) + "\n").encode(),
    }
    if with_media:
        for k, (name, offset) in enumerate(IMAGES):
            when = None if offset is None else LOG_EPOCH_UTC + timedelta(seconds=offset)
            files[f"media/{name}"] = jpeg_with_capture_time(when, k)
    for rel, data in files.items():
        p = case / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(data)
    return case
