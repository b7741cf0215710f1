import json
import math

import pytest

from uavforensics import synthetic
from uavforensics.evidence import GeoPoint
from uavforensics.mission import (
    Command,
    ComparisonError,
    Frame,
    MissionItem,
    MissionPlan,
    PlanParseError,
    compare_plan_to_track,
    describe_item,
    mission_summary,
    parse_plan,
    render_plan,
)
from uavforensics.track import EARTH_RADIUS_M, TrackSample, Trajectory, build_trajectory


def plan_doc(items, home=(0.0, 0.0, 100.0)):
    return json.dumps({"fileType": "Plan", "mission": {"items": items, "plannedHomePosition": list(home)}}).encode()


def simple(command, params, frame=3):
    return {"type": "SimpleItem", "command": command, "frame": frame, "params": params}


def metres_north(m):
    return math.degrees(m / EARTH_RADIUS_M)


class TestParsing:
    def test_fixture_plan(self):
        plan = parse_plan(json.dumps(synthetic.mission_plan_document()).encode())
        assert len(plan.items) == 12
        assert plan.items[0].command is Command.TAKEOFF
        assert plan.items[1].command is Command.CHANGE_SPEED and plan.items[1].speed_mps == 5
        assert plan.items[-1].command is Command.RETURN_TO_LAUNCH
        assert plan.home.alt_m == pytest.approx(synthetic.HOME.alt_m)

    def test_round_trip(self):
        plan = parse_plan(json.dumps(synthetic.mission_plan_document()).encode())
        again = parse_plan(render_plan(plan))
        assert again == plan
        assert render_plan(again) == render_plan(plan)

    def test_render_from_fields(self):
        plan = MissionPlan(
            (
                MissionItem(0, Command.TAKEOFF, 22, Frame.GLOBAL_RELATIVE_ALT, GeoPoint(1.0, 2.0, 10.0)),
                MissionItem(1, Command.CHANGE_SPEED, 178, speed_mps=3.0),
                MissionItem(2, Command.WAYPOINT, 16, Frame.GLOBAL_RELATIVE_ALT, GeoPoint(1.001, 2.0, 10.0), hold_s=4.0, yaw_deg=90.0),
            ),
            home=GeoPoint(1.0, 2.0, 50.0),
        )
        back = parse_plan(render_plan(plan))
        assert [i.command for i in back.items] == [i.command for i in plan.items]
        assert back.items[1].speed_mps == 3.0
        assert back.items[2].hold_s == 4.0 and back.items[2].yaw_deg == 90.0

    def test_yaw_normalized(self):
        plan = parse_plan(plan_doc([simple(115, [-90, 0, 0, 0, 0, 0, 0], frame=2)]))
        assert plan.items[0].yaw_deg == 270.0

    def test_unknown_command_kept(self):
        plan = parse_plan(plan_doc([simple(206, [0] * 7, frame=2)]))
        assert plan.items[0].command is Command.OTHER
        assert "not decoded" in describe_item(plan.items[0])

    def test_takeoff_at_null_island_uses_home(self):
        plan = parse_plan(plan_doc([simple(22, [0, 0, 0, None, 0, 0, 10])], home=(5.0, 6.0, 1.0)))
        assert (plan.items[0].coordinate.lat_deg, plan.items[0].coordinate.lon_deg) == (5.0, 6.0)

    @pytest.mark.parametrize(
        "data, where",
        [
            (b"\xff", "offset 0"),
            (b"{nope", "offset 1"),
            (b"[]", "$"),
            (b"{}", "$.mission"),
            (plan_doc([simple(16, [0] * 6)]), "$.mission.items[0].params"),
            (plan_doc([simple(16, [0, 0, 0, 0, 0, "x", 0])]), "$.mission.items[0].params[5]"),
            (plan_doc([simple(16, [0] * 7, frame=99)]), "$.mission.items[0].frame"),
            (plan_doc([simple(178, [1, 0, -1, 0, 0, 0, 0], frame=2)]), "$.mission.items[0]"),
            (plan_doc([simple(16, [0, 0, 0, 0, 95.0, 0, 0])]), "$.mission.items[0].params"),
            (plan_doc([{"type": "SimpleItem", "frame": 3, "params": [0] * 7}]), "$.mission.items[0].command"),
        ],
    )
    def test_errors_locate_problem(self, data, where):
        with pytest.raises(PlanParseError) as info:
            parse_plan(data)
        assert str(info.value).startswith(where)


class TestSummary:
    def test_narrative(self):
        plan = parse_plan(json.dumps(synthetic.mission_plan_document()).encode())
        s = mission_summary(plan)
        text = s.narrative
        assert text.startswith("home: ")
        assert "0: take off to" in text
        assert "change speed to 5 m/s" in text
        assert "turn to heading 180 deg" in text
        assert "return to launch" in text
        assert len(s.polyline) == len(plan.spatial_items())

    def test_empty(self):
        assert mission_summary(MissionPlan()).lines == ("no mission items",)


class TestComparison:
    def track(self):
        pts = [TrackSample(k * 1_000_000, GeoPoint(metres_north(k), 0.0, 110.0)) for k in range(21)]
        return Trajectory(tuple(pts))

    def plan(self, *northings):
        items = [
            MissionItem(i, Command.WAYPOINT, 16, Frame.GLOBAL_RELATIVE_ALT, GeoPoint(metres_north(n), 0.0, 10.0))
            for i, n in enumerate(northings)
        ]
        return MissionPlan(tuple(items), home=GeoPoint(0.0, 0.0, 100.0))

    def test_reached_and_missed(self):
        dev = compare_plan_to_track(self.plan(5.0, 30.0), self.track())
        assert dev.approaches[0].distance_m == pytest.approx(0.0, abs=1e-6)
        assert dev.approaches[1].distance_m == pytest.approx(10.0, rel=1e-6)
        assert dev.unreached == (1,)
        assert dev.final_distance_to_home_m == pytest.approx(math.hypot(20.0, 10.0), rel=1e-6)
        assert dev.completed_rtl is False

    def test_radius_changes_verdict(self):
        dev = compare_plan_to_track(self.plan(30.0), self.track(), reach_radius_m=10.5)
        assert dev.unreached == ()

    def test_bad_inputs(self):
        with pytest.raises(ComparisonError):
            compare_plan_to_track(self.plan(1.0), Trajectory(()))
        with pytest.raises(ComparisonError):
            compare_plan_to_track(self.plan(1.0), self.track(), reach_radius_m=0)

    def test_constructed_flight(self):
        plan = parse_plan(json.dumps(synthetic.mission_plan_document()).encode())
        dev = compare_plan_to_track(plan, build_trajectory(synthetic.flight_log()))
        assert 10 in dev.unreached
        assert dev.completed_rtl is False
        d = dev.to_dict()
        assert d["unreached"] == list(dev.unreached)
