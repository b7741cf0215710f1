"""Battery-based endurance and range estimation.

Energy is tracked in watt-hours. The pack's remaining capacity is read off a
linear voltage/capacity model between an explicit empty voltage and the
full-charge voltage; the energy drawn so far, divided by the cruise power
draw, gives the time flown, and that time at the average forward speed gives
the maximum distance from the point of origin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

# Back-solved so that 6500 mAh at 16.8 V maps to 5300 mAh at 16.2 V:
# 6500 (16.2 - V0) = 5300 (16.8 - V0)  =>  V0 = 13.55 V
DEFAULT_EMPTY_VOLTAGE_V = 13.55

IDEAL_CONDITIONS_NOTE = (
    "Upper bound: the power model is a still-air, fixed-draw figure. Real flights spend more "
    "energy per second, so true endurance and range are likely shorter."
)
PWM_REFINEMENT_NOTE = (
    "Not computed: cruise power is taken as given. Mapping the logged motor outputs through "
    "measured thrust-stand curves would give a flight-specific figure."
)


class RangeInputError(ValueError):
    """Invalid input to a range-estimation stage."""

    def __init__(self, message: str, stage: Optional[str] = None):
        self.stage = stage
        super().__init__(f"{stage}: {message}" if stage else message)


def _positive(name: str, v: float):
    if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
        raise RangeInputError(f"{name} must be a positive number, got {v!r}")


def _non_negative(name: str, v: float):
    if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
        raise RangeInputError(f"{name} must be a non-negative number, got {v!r}")


@dataclass(frozen=True)
class BatterySpec:
    cell_count: int
    capacity_mah: float
    full_voltage_v: float
    empty_voltage_v: float = DEFAULT_EMPTY_VOLTAGE_V

    def __post_init__(self):
        if not isinstance(self.cell_count, int) or self.cell_count < 1:
            raise RangeInputError(f"cell_count must be an integer >= 1, got {self.cell_count!r}")
        _positive("capacity_mah", self.capacity_mah)
        _positive("full_voltage_v", self.full_voltage_v)
        _non_negative("empty_voltage_v", self.empty_voltage_v)
        if not self.empty_voltage_v < self.full_voltage_v:
            raise RangeInputError("empty_voltage_v must be below full_voltage_v")


@dataclass(frozen=True)
class BatteryObservation:
    observed_voltage_v: float

    def __post_init__(self):
        _positive("observed_voltage_v", self.observed_voltage_v)

    def check_against(self, spec: BatterySpec):
        if self.observed_voltage_v > spec.full_voltage_v:
            raise RangeInputError(
                f"observed voltage {self.observed_voltage_v} V exceeds full-charge voltage {spec.full_voltage_v} V"
            )


@dataclass(frozen=True)
class PowerModel:
    per_motor_cruise_w: float
    motor_count: int
    avionics_w: float = 0.0
    cruise_speed_mps: float = 0.0

    def __post_init__(self):
        _positive("per_motor_cruise_w", self.per_motor_cruise_w)
        if not isinstance(self.motor_count, int) or self.motor_count < 1:
            raise RangeInputError(f"motor_count must be an integer >= 1, got {self.motor_count!r}")
        _non_negative("avionics_w", self.avionics_w)
        _non_negative("cruise_speed_mps", self.cruise_speed_mps)

    @property
    def total_power_w(self) -> float:
        return self.per_motor_cruise_w * self.motor_count + self.avionics_w


@dataclass(frozen=True)
class RangeEstimate:
    e_total_wh: float
    e_remaining_wh: float
    e_used_wh: float
    t_flight_s: float
    r_max_m: float
    v_avg_mps: float
    remaining_capacity_mah: float
    total_power_w: float
    assumptions: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "e_total_wh": self.e_total_wh,
            "e_remaining_wh": self.e_remaining_wh,
            "e_used_wh": self.e_used_wh,
            "t_flight_s": self.t_flight_s,
            "r_max_m": self.r_max_m,
            "v_avg_mps": self.v_avg_mps,
            "remaining_capacity_mah": self.remaining_capacity_mah,
            "total_power_w": self.total_power_w,
            "assumptions": list(self.assumptions),
        }


def total_energy(voltage_v: float, capacity_mah: float) -> float:
    """Energy in Wh held by a pack of ``capacity_mah`` at ``voltage_v``."""
    _positive("voltage_v", voltage_v)
    _positive("capacity_mah", capacity_mah)
    return voltage_v * capacity_mah / 1000.0


def remaining_capacity(spec: BatterySpec, obs: BatteryObservation) -> float:
    """Linear voltage-to-capacity model; 0 at or below the empty voltage."""
    obs.check_against(spec)
    v = obs.observed_voltage_v
    if v <= spec.empty_voltage_v:
        return 0.0
    if v == spec.full_voltage_v:
        return float(spec.capacity_mah)
    return spec.capacity_mah * (v - spec.empty_voltage_v) / (spec.full_voltage_v - spec.empty_voltage_v)


def energy_used(spec: BatterySpec, obs: BatteryObservation) -> float:
    e_total = total_energy(spec.full_voltage_v, spec.capacity_mah)
    remaining = remaining_capacity(spec, obs)
    e_remaining = obs.observed_voltage_v * remaining / 1000.0
    return max(0.0, e_total - e_remaining)


def flight_time(e_used_wh: float, model: PowerModel) -> float:
    """Seconds of cruise flight that ``e_used_wh`` pays for."""
    _non_negative("e_used_wh", e_used_wh)
    power = model.total_power_w
    if not power > 0:
        raise RangeInputError("total power draw must be positive")
    return e_used_wh * 3600.0 / power


def max_range(t_flight_s: float, v_avg_mps: float) -> float:
    _non_negative("t_flight_s", t_flight_s)
    _non_negative("v_avg_mps", v_avg_mps)
    return t_flight_s * v_avg_mps


def estimate_range(spec: BatterySpec, obs: BatteryObservation, model: PowerModel) -> RangeEstimate:
    """Compose capacity, energy, endurance and range for one observation."""
    notes = [
        IDEAL_CONDITIONS_NOTE,
        f"Linear voltage/capacity model between {spec.empty_voltage_v} V (empty) "
        f"and {spec.full_voltage_v} V (full).",
        f"Cruise power {model.per_motor_cruise_w} W x {model.motor_count} motors "
        f"+ {model.avionics_w} W avionics = {model.total_power_w} W.",
        PWM_REFINEMENT_NOTE,
    ]
    try:
        remaining = remaining_capacity(spec, obs)
    except RangeInputError as exc:
        raise RangeInputError(str(exc), "remaining_capacity") from exc
    if remaining == 0.0:
        notes.append("Observed voltage at or below the empty voltage: battery treated as depleted.")
    try:
        e_total = total_energy(spec.full_voltage_v, spec.capacity_mah)
        e_remaining = obs.observed_voltage_v * remaining / 1000.0
        e_used = max(0.0, e_total - e_remaining)
    except RangeInputError as exc:
        raise RangeInputError(str(exc), "energy_used") from exc
    if e_used == 0.0:
        notes.append("Battery at full charge: no energy drawn, so no flight is evidenced by the battery.")
    try:
        t = flight_time(e_used, model)
    except RangeInputError as exc:
        raise RangeInputError(str(exc), "flight_time") from exc
    try:
        r = max_range(t, model.cruise_speed_mps)
    except RangeInputError as exc:
        raise RangeInputError(str(exc), "max_range") from exc
    if model.cruise_speed_mps == 0:
        notes.append("No average forward speed supplied; range reported as 0 m.")
    return RangeEstimate(
        e_total_wh=e_total,
        e_remaining_wh=e_remaining,
        e_used_wh=e_used,
        t_flight_s=t,
        r_max_m=r,
        v_avg_mps=model.cruise_speed_mps,
        remaining_capacity_mah=remaining,
        total_power_w=model.total_power_w,
        assumptions=tuple(notes),
    )


@dataclass
class BatteryDocument:
    """Contents of a case's battery/power observation file."""

    spec: BatterySpec
    observation: BatteryObservation
    model: Optional[PowerModel] = None
    notes: list[str] = field(default_factory=list)


def load_battery_document(data: bytes, cruise_speed_fallback: Optional[float] = None) -> BatteryDocument:
    """Parse the battery observation JSON document.

    ``power_model.cruise_speed_mps`` may be omitted; the autopilot's cruise
    speed parameter is then used when supplied as ``cruise_speed_fallback``.
    """
    try:
        doc = json.loads(data.decode("utf-8"))
        b = doc["battery"]
        spec = BatterySpec(
            cell_count=int(b["cell_count"]),
            capacity_mah=float(b["capacity_mah"]),
            full_voltage_v=float(b["full_voltage_v"]),
            empty_voltage_v=float(b.get("empty_voltage_v", DEFAULT_EMPTY_VOLTAGE_V)),
        )
        obs = BatteryObservation(float(doc["observation"]["observed_voltage_v"]))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise RangeInputError(f"malformed battery document: {exc}") from exc
    notes = []
    model = None
    pm = doc.get("power_model")
    if pm is not None:
        speed = pm.get("cruise_speed_mps")
        if speed is None and cruise_speed_fallback is not None:
            speed = cruise_speed_fallback
            notes.append(f"Average forward speed taken from the cruise-speed parameter ({speed} m/s).")
        model = PowerModel(
            per_motor_cruise_w=float(pm["per_motor_cruise_w"]),
            motor_count=int(pm["motor_count"]),
            avionics_w=float(pm.get("avionics_w", 0.0)),
            cruise_speed_mps=float(speed or 0.0),
        )
    return BatteryDocument(spec, obs, model, notes)
