"""Pre-planned mission decoding and planned-versus-flown comparison.

Plans are read from the ground-station ``.plan`` interchange document: JSON
with a ``mission.items`` list whose entries carry MAVLink command numbers and
the seven raw command parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

from .evidence import GeoPoint
from .track import Trajectory, distance_3d_m

DEFAULT_REACH_RADIUS_M = 3.0


class Command(str, Enum):
    TAKEOFF = "takeoff"
    WAYPOINT = "waypoint"
    CHANGE_SPEED = "change_speed"
    CONDITION_YAW = "condition_yaw"
    LOITER_TIME = "loiter_time"
    RETURN_TO_LAUNCH = "return_to_launch"
    LAND = "land"
    OTHER = "other"


class Frame(str, Enum):
    GLOBAL_RELATIVE_ALT = "global_relative_alt"
    GLOBAL_AMSL = "global_amsl"
    GLOBAL_TERRAIN_ALT = "global_terrain_alt"
    LOCAL = "local"
    MISSION = "mission"


# MAVLink command ids
MAV_CMD = {
    16: Command.WAYPOINT,
    19: Command.LOITER_TIME,
    20: Command.RETURN_TO_LAUNCH,
    21: Command.LAND,
    22: Command.TAKEOFF,
    115: Command.CONDITION_YAW,
    178: Command.CHANGE_SPEED,
}
CMD_ID = {v: k for k, v in MAV_CMD.items()}

# MAVLink frame ids
MAV_FRAME = {
    0: Frame.GLOBAL_AMSL,
    5: Frame.GLOBAL_AMSL,
    3: Frame.GLOBAL_RELATIVE_ALT,
    6: Frame.GLOBAL_RELATIVE_ALT,
    10: Frame.GLOBAL_TERRAIN_ALT,
    11: Frame.GLOBAL_TERRAIN_ALT,
    1: Frame.LOCAL,
    7: Frame.LOCAL,
    8: Frame.LOCAL,
    9: Frame.LOCAL,
    2: Frame.MISSION,
}
FRAME_ID = {
    Frame.GLOBAL_AMSL: 0,
    Frame.GLOBAL_RELATIVE_ALT: 3,
    Frame.GLOBAL_TERRAIN_ALT: 10,
    Frame.LOCAL: 1,
    Frame.MISSION: 2,
}

SPATIAL = (Command.TAKEOFF, Command.WAYPOINT, Command.LOITER_TIME, Command.LAND)


class PlanParseError(ValueError):
    def __init__(self, message: str, path: str = "", offset: Optional[int] = None):
        self.path = path
        self.offset = offset
        where = path or (f"offset {offset}" if offset is not None else "document")
        super().__init__(f"{where}: {message}")


class ComparisonError(ValueError):
    pass


@dataclass(frozen=True)
class MissionItem:
    seq: int
    command: Command
    raw_command: int
    frame: Frame = Frame.MISSION
    coordinate: Optional[GeoPoint] = None
    hold_s: Optional[float] = None
    speed_mps: Optional[float] = None
    yaw_deg: Optional[float] = None
    params: tuple = ()
    auto_continue: bool = True

    def __post_init__(self):
        c = self.command
        if c in (Command.TAKEOFF, Command.WAYPOINT) and self.coordinate is None:
            raise ValueError(f"item {self.seq}: {c.value} needs a coordinate")
        if c == Command.CHANGE_SPEED and not (self.speed_mps is not None and self.speed_mps > 0):
            raise ValueError(f"item {self.seq}: change_speed needs a positive speed")
        if c == Command.LOITER_TIME and not (self.hold_s is not None and self.hold_s >= 0):
            raise ValueError(f"item {self.seq}: loiter_time needs a non-negative hold time")
        if c == Command.CONDITION_YAW and self.yaw_deg is None:
            raise ValueError(f"item {self.seq}: condition_yaw needs a heading")
        if self.yaw_deg is not None and not 0 <= self.yaw_deg < 360:
            raise ValueError(f"item {self.seq}: yaw {self.yaw_deg} outside [0, 360)")


@dataclass(frozen=True)
class MissionPlan:
    items: tuple[MissionItem, ...] = ()
    home: Optional[GeoPoint] = None
    cruise_speed_mps: Optional[float] = None
    hover_speed_mps: Optional[float] = None
    has_geofence: bool = False
    has_rally_points: bool = False

    def __post_init__(self):
        for i, item in enumerate(self.items):
            if item.seq != i:
                raise ValueError(f"item sequence must run 0..n-1; item {i} has seq {item.seq}")

    def absolute(self, item: MissionItem, home_alt: Optional[float] = None) -> Optional[GeoPoint]:
        """Item coordinate with altitude above mean sea level where resolvable."""
        c = item.coordinate
        if c is None:
            return None
        if item.frame == Frame.GLOBAL_RELATIVE_ALT and c.alt_m is not None:
            base = home_alt if home_alt is not None else (self.home.alt_m if self.home else None)
            if base is None:
                return GeoPoint(c.lat_deg, c.lon_deg, None)
            return GeoPoint(c.lat_deg, c.lon_deg, base + c.alt_m)
        if item.frame in (Frame.GLOBAL_AMSL,):
            return c
        return GeoPoint(c.lat_deg, c.lon_deg, None)

    def spatial_items(self) -> list[MissionItem]:
        return [i for i in self.items if i.command in SPATIAL and i.coordinate is not None]

    def polyline(self, home_alt: Optional[float] = None) -> list[GeoPoint]:
        return [self.absolute(i, home_alt) for i in self.spatial_items()]


@dataclass(frozen=True)
class MissionSummary:
    lines: tuple[str, ...]
    polyline: tuple[GeoPoint, ...]

    @property
    def narrative(self) -> str:
        return "\n".join(self.lines)

    def to_dict(self) -> dict:
        return {"narrative": list(self.lines), "polyline": [p.to_dict() for p in self.polyline]}


@dataclass(frozen=True)
class WaypointApproach:
    seq: int
    planned: GeoPoint
    distance_m: float
    t_us: int
    reached: bool

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "planned": self.planned.to_dict(),
            "closest_approach_m": self.distance_m,
            "t_closest_us": self.t_us,
            "reached": self.reached,
        }


@dataclass(frozen=True)
class PlanDeviation:
    approaches: tuple[WaypointApproach, ...]
    unreached: tuple[int, ...]
    completed_rtl: bool
    reach_radius_m: float
    final_distance_to_home_m: float

    def to_dict(self) -> dict:
        return {
            "reach_radius_m": self.reach_radius_m,
            "waypoints": [a.to_dict() for a in self.approaches],
            "unreached": list(self.unreached),
            "completed_rtl": self.completed_rtl,
            "final_distance_to_home_m": self.final_distance_to_home_m,
        }


# -- parsing ----------------------------------------------------------------


def _num(v, path: str) -> Optional[float]:
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise PlanParseError(f"expected a number, got {type(v).__name__}", path)
    v = float(v)
    return None if math.isnan(v) else v


def _yaw(v: Optional[float]) -> Optional[float]:
    if v is None:
        return None
    y = math.fmod(v, 360.0)
    if y < 0:
        y += 360.0
    return 0.0 if y >= 360.0 else y


def _item(raw: Any, seq: int, home: Optional[GeoPoint], path: str) -> MissionItem:
    if not isinstance(raw, dict):
        raise PlanParseError("mission item must be an object", path)
    if raw.get("type", "SimpleItem") != "SimpleItem":
        return MissionItem(seq, Command.OTHER, -1, Frame.MISSION, params=(raw.get("complexItemType", raw.get("type")),))
    if "command" not in raw:
        raise PlanParseError("missing 'command'", path + ".command")
    code = raw["command"]
    if isinstance(code, bool) or not isinstance(code, int):
        raise PlanParseError("command must be an integer", path + ".command")
    frame_id = raw.get("frame", 2)
    if frame_id not in MAV_FRAME:
        raise PlanParseError(f"unsupported frame {frame_id!r}", path + ".frame")
    frame = MAV_FRAME[frame_id]
    params = raw.get("params", [])
    if not isinstance(params, list) or len(params) != 7:
        raise PlanParseError("params must be a list of 7 values", path + ".params")
    p = [_num(v, f"{path}.params[{i}]") for i, v in enumerate(params)]
    command = MAV_CMD.get(code, Command.OTHER)

    coord = None
    lat, lon, alt = p[4], p[5], p[6]
    if command in SPATIAL and frame not in (Frame.MISSION, Frame.LOCAL):
        if lat is None or lon is None or (lat == 0 and lon == 0 and command in (Command.TAKEOFF, Command.LAND)):
            if home is not None and command in (Command.TAKEOFF, Command.LAND):
                lat, lon = home.lat_deg, home.lon_deg
            else:
                lat = lon = None
        if lat is not None and lon is not None:
            try:
                coord = GeoPoint.normalized(lat, lon, alt)
            except ValueError as exc:
                raise PlanParseError(str(exc), path + ".params") from exc

    hold = speed = yaw = None
    if command == Command.WAYPOINT:
        hold = p[0] if p[0] else None
        yaw = _yaw(p[3])
    elif command == Command.TAKEOFF:
        yaw = _yaw(p[3])
    elif command == Command.LOITER_TIME:
        hold = p[0]
    elif command == Command.CHANGE_SPEED:
        speed = p[1]
    elif command == Command.CONDITION_YAW:
        yaw = _yaw(p[0])

    try:
        return MissionItem(
            seq=seq,
            command=command,
            raw_command=code,
            frame=frame,
            coordinate=coord,
            hold_s=hold,
            speed_mps=speed,
            yaw_deg=yaw,
            params=tuple(params),
            auto_continue=bool(raw.get("autoContinue", True)),
        )
    except ValueError as exc:
        raise PlanParseError(str(exc), path) from exc


def parse_plan(data: bytes) -> MissionPlan:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise PlanParseError("not UTF-8", offset=exc.start) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanParseError(exc.msg, offset=exc.pos) from exc
    if not isinstance(doc, dict):
        raise PlanParseError("top level must be an object", "$")
    mission = doc.get("mission")
    if not isinstance(mission, dict):
        raise PlanParseError("missing 'mission' object", "$.mission")
    items_raw = mission.get("items", [])
    if not isinstance(items_raw, list):
        raise PlanParseError("'items' must be a list", "$.mission.items")

    home = None
    hp = mission.get("plannedHomePosition")
    if hp is not None:
        if not isinstance(hp, list) or len(hp) < 2:
            raise PlanParseError("must be [lat, lon, alt]", "$.mission.plannedHomePosition")
        vals = [_num(v, f"$.mission.plannedHomePosition[{i}]") for i, v in enumerate(hp[:3])]
        if vals[0] is not None and vals[1] is not None:
            try:
                home = GeoPoint.normalized(vals[0], vals[1], vals[2] if len(vals) > 2 else None)
            except ValueError as exc:
                raise PlanParseError(str(exc), "$.mission.plannedHomePosition") from exc

    items = tuple(_item(raw, i, home, f"$.mission.items[{i}]") for i, raw in enumerate(items_raw))
    fence = doc.get("geoFence") or {}
    rally = doc.get("rallyPoints") or {}
    return MissionPlan(
        items=items,
        home=home,
        cruise_speed_mps=_num(mission.get("cruiseSpeed"), "$.mission.cruiseSpeed"),
        hover_speed_mps=_num(mission.get("hoverSpeed"), "$.mission.hoverSpeed"),
        has_geofence=bool(fence.get("polygons") or fence.get("circles")),
        has_rally_points=bool(rally.get("points")),
    )


def render_plan(plan: MissionPlan) -> bytes:
    """Serialize to the ``.plan`` interchange format."""
    items = []
    for it in plan.items:
        if it.raw_command < 0:
            items.append({"type": "ComplexItem", "complexItemType": it.params[0] if it.params else None})
            continue
        if it.params:
            params = list(it.params)
        else:
            params = [None] * 7
            c = it.coordinate
            if it.command == Command.WAYPOINT:
                params[0] = it.hold_s or 0
                params[3] = it.yaw_deg
            elif it.command == Command.TAKEOFF:
                params[3] = it.yaw_deg
            elif it.command == Command.LOITER_TIME:
                params[0] = it.hold_s
            elif it.command == Command.CHANGE_SPEED:
                params[0], params[1], params[2] = 1, it.speed_mps, -1
            elif it.command == Command.CONDITION_YAW:
                params[0] = it.yaw_deg
            if c is not None:
                params[4], params[5], params[6] = c.lat_deg, c.lon_deg, c.alt_m
            params = [0 if v is None and i not in (3,) else v for i, v in enumerate(params)]
        items.append(
            {
                "type": "SimpleItem",
                "command": it.raw_command,
                "doJumpId": it.seq + 1,
                "frame": FRAME_ID[it.frame],
                "params": params,
                "autoContinue": it.auto_continue,
            }
        )
    mission: dict[str, Any] = {"version": 2, "firmwareType": 12, "vehicleType": 2, "items": items}
    if plan.cruise_speed_mps is not None:
        mission["cruiseSpeed"] = plan.cruise_speed_mps
    if plan.hover_speed_mps is not None:
        mission["hoverSpeed"] = plan.hover_speed_mps
    if plan.home is not None:
        mission["plannedHomePosition"] = [plan.home.lat_deg, plan.home.lon_deg, plan.home.alt_m or 0]
    doc = {
        "fileType": "Plan",
        "version": 1,
        "groundStation": "QGroundControl",
        "mission": mission,
        "geoFence": {"version": 2, "polygons": [], "circles": []},
        "rallyPoints": {"version": 2, "points": []},
    }
    return (json.dumps(doc, indent=4) + "\n").encode("utf-8")


# -- summary ----------------------------------------------------------------


def _where(c: GeoPoint) -> str:
    return f"{c.lat_deg:.7f}, {c.lon_deg:.7f}"


def _alt_phrase(item: MissionItem) -> str:
    if item.coordinate is None or item.coordinate.alt_m is None:
        return ""
    ref = {
        Frame.GLOBAL_RELATIVE_ALT: " above home",
        Frame.GLOBAL_AMSL: " AMSL",
        Frame.GLOBAL_TERRAIN_ALT: " above terrain",
    }.get(item.frame, "")
    return f"{item.coordinate.alt_m:g} m{ref}"


def _alt_text(item: MissionItem) -> str:
    phrase = _alt_phrase(item)
    return f" at {phrase}" if phrase else ""


def describe_item(item: MissionItem) -> str:
    c = item.command
    if c == Command.TAKEOFF:
        phrase = _alt_phrase(item)
        text = f"take off to {phrase}" if phrase else "take off"
        text += f" from {_where(item.coordinate)}"
    elif c == Command.WAYPOINT:
        text = f"fly to waypoint {_where(item.coordinate)}{_alt_text(item)}"
        if item.hold_s:
            text += f"; hold {item.hold_s:g} s"
        if item.yaw_deg is not None:
            text += f"; heading {item.yaw_deg:g} deg"
    elif c == Command.CHANGE_SPEED:
        text = f"change speed to {item.speed_mps:g} m/s"
    elif c == Command.CONDITION_YAW:
        text = f"turn to heading {item.yaw_deg:g} deg"
    elif c == Command.LOITER_TIME:
        text = f"loiter; hold {item.hold_s:g} s"
        if item.coordinate is not None:
            text += f" at {_where(item.coordinate)}{_alt_text(item)}"
    elif c == Command.RETURN_TO_LAUNCH:
        text = "return to launch"
    elif c == Command.LAND:
        text = "land" + (f" at {_where(item.coordinate)}" if item.coordinate else "")
    else:
        text = f"command {item.raw_command} (not decoded)"
    return f"{item.seq}: {text}"


def mission_summary(plan: MissionPlan) -> MissionSummary:
    if not plan.items:
        return MissionSummary(("no mission items",), ())
    lines = []
    if plan.home is not None:
        alt = f" ({plan.home.alt_m:g} m AMSL)" if plan.home.alt_m is not None else ""
        lines.append(f"home: {_where(plan.home)}{alt}")
    lines.extend(describe_item(i) for i in plan.items)
    if plan.has_geofence:
        lines.append("geofence present (not decoded)")
    if plan.has_rally_points:
        lines.append("rally points present (not decoded)")
    return MissionSummary(tuple(lines), tuple(plan.polyline()))


# -- comparison -------------------------------------------------------------


def compare_plan_to_track(
    plan: MissionPlan, traj: Trajectory, reach_radius_m: float = DEFAULT_REACH_RADIUS_M
) -> PlanDeviation:
    """Closest approach of the flown track to each planned location.

    Distances combine great-circle horizontal separation with altitude
    difference. Relative altitudes are resolved against the plan's home
    altitude, or the first track sample when the plan has none.
    """
    if not traj.samples:
        raise ComparisonError("trajectory is empty")
    if not reach_radius_m > 0:
        raise ComparisonError("reach radius must be positive")
    first = traj.samples[0].position
    home_alt = plan.home.alt_m if plan.home is not None and plan.home.alt_m is not None else first.alt_m

    approaches = []
    for item in plan.spatial_items():
        target = plan.absolute(item, home_alt)
        best, best_t = math.inf, traj.samples[0].t_us
        for s in traj.samples:
            d = distance_3d_m(target, s.position if target.alt_m is not None else GeoPoint(s.position.lat_deg, s.position.lon_deg))
            if d < best:
                best, best_t = d, s.t_us
        approaches.append(WaypointApproach(item.seq, target, best, best_t, best <= reach_radius_m))

    home = plan.home if plan.home is not None else first
    if home.alt_m is None:
        home = GeoPoint(home.lat_deg, home.lon_deg, home_alt)
    last = traj.samples[-1].position
    if home.alt_m is None or last.alt_m is None:
        final = distance_3d_m(GeoPoint(home.lat_deg, home.lon_deg), GeoPoint(last.lat_deg, last.lon_deg))
    else:
        final = distance_3d_m(home, last)
    return PlanDeviation(
        approaches=tuple(approaches),
        unreached=tuple(a.seq for a in approaches if not a.reached),
        completed_rtl=final <= reach_radius_m,
        reach_radius_m=reach_radius_m,
        final_distance_to_home_m=final,
    )
