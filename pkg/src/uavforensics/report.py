"""Forensic report assembly and rendering.

JSON is the canonical form; the markdown report is rendered from the same
section data so the two never disagree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from importlib import resources
from typing import Any, Optional, Sequence

from . import __version__
from .evidence import CaseManifest, ComponentRecord, format_utc, parse_utc

REPORT_SCHEMA_ID = "uavforensics.report/1"
SECTION_ORDER = ("case", "components", "parameters", "mission", "flight", "range", "media", "data_quality")
SECTION_TITLES = {
    "case": "Case and evidence",
    "components": "Physical components",
    "parameters": "Parameter findings",
    "mission": "Mission plan",
    "flight": "Flight summary",
    "range": "Endurance and range",
    "media": "Media geotags",
    "data_quality": "Data quality",
}
AVAILABLE = "available"
NOT_AVAILABLE = "not_available"


@dataclass(frozen=True)
class Section:
    name: str
    status: str
    data: Any = None
    reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {"status": self.status, "reason": self.reason, "data": self.data}

    @property
    def available(self) -> bool:
        return self.status == AVAILABLE


def available(name: str, data) -> Section:
    # normalize through JSON so in-memory and parsed reports compare equal
    return Section(name, AVAILABLE, json.loads(json.dumps(data)))


def missing(name: str, reason: str) -> Section:
    return Section(name, NOT_AVAILABLE, None, reason)


@dataclass(frozen=True)
class ForensicReport:
    case_id: str
    sections: tuple[Section, ...]
    generated_at: datetime
    toolkit_version: str = __version__

    def __post_init__(self):
        names = tuple(s.name for s in self.sections)
        if names != SECTION_ORDER:
            raise ValueError(f"sections must be exactly {SECTION_ORDER}, got {names}")

    def section(self, name: str) -> Section:
        return self.sections[SECTION_ORDER.index(name)]

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA_ID,
            "case_id": self.case_id,
            "generated_at": format_utc(self.generated_at),
            "toolkit_version": self.toolkit_version,
            "sections": {s.name: s.to_dict() for s in self.sections},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForensicReport":
        secs = d["sections"]
        return cls(
            case_id=d["case_id"],
            sections=tuple(
                Section(n, secs[n]["status"], secs[n].get("data"), secs[n].get("reason")) for n in SECTION_ORDER
            ),
            generated_at=parse_utc(d["generated_at"]),
            toolkit_version=d["toolkit_version"],
        )


def build_report(
    manifest: CaseManifest,
    generated_at: datetime,
    *,
    verification: Optional[Sequence] = None,
    components: Optional[Sequence[ComponentRecord]] = None,
    findings: Optional[Sequence] = None,
    parameter_source: Optional[str] = None,
    mission_summary=None,
    deviation=None,
    flight=None,
    range_estimate=None,
    range_notes: Sequence[str] = (),
    geotags: Optional[Sequence] = None,
    alignment=None,
    uncorrelatable: Sequence[str] = (),
    log=None,
    trajectory=None,
    reasons: Optional[dict] = None,
    quality_notes: Sequence[str] = (),
) -> ForensicReport:
    """Assemble whatever analyses exist; anything absent becomes an explicit
    "not available" section carrying ``reasons[name]`` or a default reason."""
    reasons = dict(reasons or {})

    def why(name, default):
        return reasons.get(name, default)

    case = {
        "case_id": manifest.case_id,
        "created_at": format_utc(manifest.created_at),
        "item_count": len(manifest.items),
        "items": [i.to_dict() for i in manifest.items],
    }
    if verification is not None:
        case["verification"] = [{"item_id": i, "status": s.value} for i, s in verification]
    if manifest.items:
        sections = [available("case", case)]
    else:
        sections = [missing("case", why("case", "no evidence items in case"))]

    if components:
        sections.append(available("components", [c.to_dict() for c in components]))
    else:
        sections.append(missing("components", why("components", "no component record")))

    if findings is not None:
        sections.append(
            available(
                "parameters",
                {"source": parameter_source, "finding_count": len(findings), "findings": [f.to_dict() for f in findings]},
            )
        )
    else:
        sections.append(missing("parameters", why("parameters", "no parameters (no flight log or parameter dump)")))

    if mission_summary is not None:
        m = {"summary": mission_summary.to_dict(), "deviation": None}
        if deviation is not None:
            m["deviation"] = deviation.to_dict()
        else:
            m["deviation_reason"] = why("deviation", "no trajectory to compare against")
        sections.append(available("mission", m))
    else:
        sections.append(missing("mission", why("mission", "no mission plan")))

    if flight is not None:
        sections.append(available("flight", flight.to_dict()))
    else:
        sections.append(missing("flight", why("flight", "no flight log")))

    if range_estimate is not None:
        r = range_estimate.to_dict()
        r["input_notes"] = list(range_notes)
        sections.append(available("range", r))
    else:
        sections.append(missing("range", why("range", "no battery observation")))

    if geotags is not None:
        sections.append(
            available(
                "media",
                {
                    "alignment": None if alignment is None else alignment.to_dict(),
                    "result_count": len(geotags),
                    "results": [g.to_dict() for g in geotags],
                    "uncorrelatable": list(uncorrelatable),
                },
            )
        )
    else:
        sections.append(missing("media", why("media", "no media manifest")))

    quality: dict = {"notes": list(quality_notes)}
    if log is not None:
        quality.update(
            {
                "dropouts": [{"t_us": d.timestamp_us, "duration_ms": d.duration_ms} for d in log.dropouts],
                "truncated": log.truncated,
                "truncated_at": log.truncated_at,
                "skipped_messages": dict(sorted(log.skipped.items())),
                "parser_warnings": list(log.warnings),
            }
        )
    if trajectory is not None:
        quality["trajectory_source"] = trajectory.source_note
        quality["trajectory_notes"] = list(trajectory.notes)
    if len(quality) > 1 or quality["notes"]:
        sections.append(available("data_quality", quality))
    else:
        sections.append(missing("data_quality", why("data_quality", "no flight log")))

    return ForensicReport(manifest.case_id, tuple(sections), generated_at)


# -- rendering --------------------------------------------------------------


def render_json(report: ForensicReport) -> bytes:
    return (json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def report_from_json(data: bytes) -> ForensicReport:
    return ForensicReport.from_dict(json.loads(data.decode("utf-8")))


def report_schema() -> dict:
    return json.loads(resources.files("uavforensics.data").joinpath("report.schema.json").read_text("utf-8"))


def validate_report(doc: dict):
    """Raise jsonschema.ValidationError if ``doc`` does not match the schema."""
    import jsonschema

    jsonschema.validate(doc, report_schema())


def _f(v, digits=1, unit=""):
    if v is None:
        return "n/a"
    return f"{v:.{digits}f}{unit}"


def _md_case(d, out):
    out.append(f"- Case: {d['case_id']}")
    out.append(f"- Manifest created: {d['created_at']}")
    out.append(f"- Evidence items: {d['item_count']}")
    status = {v["item_id"]: v["status"] for v in d.get("verification", [])}
    if d["items"]:
        out.append("")
        out.append("| Item | Kind | SHA-256 | Bytes | Integrity |")
        out.append("|---|---|---|---|---|")
        for i in d["items"]:
            out.append(
                f"| {i['item_id']} | {i['kind']} | `{i['sha256']}` | {i['size_bytes']} | {status.get(i['item_id'], 'not checked')} |"
            )


def _md_components(d, out):
    out.append("| Component | Description | Serial | Mass (g) | Dimension (cm) |")
    out.append("|---|---|---|---|---|")
    for c in d:
        out.append(
            f"| {c['component']} | {c['description']} | {c['serial_number'] or '-'} "
            f"| {c['mass_g'] if c['mass_g'] is not None else '-'} | {c['dimension_cm'] if c['dimension_cm'] is not None else '-'} |"
        )


def _md_parameters(d, out):
    out.append(f"Source: {d['source'] or 'unknown'}; {d['finding_count']} finding(s).")
    out.append("")
    if not d["findings"]:
        out.append("No rule matched.")
        return
    out.append("| Severity | Code | Parameter | Value | Meaning |")
    out.append("|---|---|---|---|---|")
    for f in d["findings"]:
        v = f["observed"]
        shown = f"{v:.7g}" if isinstance(v, float) else v
        out.append(f"| {f['severity']} | {f['code']} | {f['parameter']} | {shown} | {f['meaning']} |")


def _md_mission(d, out):
    for line in d["summary"]["narrative"]:
        out.append(f"- {line}")
    dev = d.get("deviation")
    out.append("")
    if dev is None:
        out.append(f"Plan vs. flown track: not available: {d.get('deviation_reason', 'no trajectory')}")
        return
    out.append(f"Plan vs. flown track (reach radius {dev['reach_radius_m']:g} m):")
    out.append("")
    out.append("| Item | Closest approach (m) | Reached |")
    out.append("|---|---|---|")
    for w in dev["waypoints"]:
        out.append(f"| {w['seq']} | {w['closest_approach_m']:.1f} | {'yes' if w['reached'] else 'no'} |")
    out.append("")
    out.append(f"- Unreached items: {', '.join(str(s) for s in dev['unreached']) or 'none'}")
    out.append(f"- Returned to launch: {'yes' if dev['completed_rtl'] else 'no'}")
    out.append(f"- Final distance to home: {dev['final_distance_to_home_m']:.1f} m")


def _md_flight(d, out):
    rows = [
        ("Total flight time", _f(d["total_flight_time_s"], 1, " s")),
        ("Total distance", _f(d["total_distance_m"], 1, " m")),
        ("Average speed", _f(d["avg_speed_mps"], 2, " m/s")),
        ("Max speed", _f(d["max_speed_mps"], 2, " m/s")),
        ("Max climb rate", _f(d["max_up_speed_mps"], 2, " m/s")),
        ("Max descent rate", _f(d["max_down_speed_mps"], 2, " m/s")),
        ("Max tilt", _f(d["max_tilt_deg"], 1, " deg")),
        ("OS version", d["os_version"] or "n/a"),
        ("Estimator", d["estimator"] or "n/a"),
        ("First log sample", _f(d["arming_offset_s"], 1, " s after power-on")),
    ]
    out.append("| Statistic | Value |")
    out.append("|---|---|")
    out.extend(f"| {k} | {v} |" for k, v in rows)
    out.append("")
    out.append(f"Position source: {d['source_note']}")
    for n in d["notes"]:
        out.append(f"- {n}")


def _md_range(d, out):
    out.append(f"- Energy at full charge: {d['e_total_wh']:.2f} Wh")
    out.append(f"- Energy remaining: {d['e_remaining_wh']:.2f} Wh ({d['remaining_capacity_mah']:.0f} mAh)")
    out.append(f"- Energy used: {d['e_used_wh']:.2f} Wh")
    out.append(f"- Cruise power draw: {d['total_power_w']:g} W")
    out.append(f"- Estimated flight time: {d['t_flight_s']:.1f} s")
    out.append(f"- Maximum range from origin: {d['r_max_m']:.1f} m at {d['v_avg_mps']:g} m/s")
    out.append("")
    for n in list(d.get("input_notes", [])) + d["assumptions"]:
        out.append(f"> {n}")
        out.append(">")
    if out[-1] == ">":
        out.pop()


def _md_media(d, out):
    a = d["alignment"]
    if a is not None:
        out.append(f"Clock alignment: log t=0 at {a['log_epoch_utc']}, camera offset {a['camera_offset_s']:g} s ({a['source']})")
        out.append("")
    if d["results"]:
        out.append("| File | Log time (s) | Latitude | Longitude | Altitude (m) | Status |")
        out.append("|---|---|---|---|---|---|")
        for g in d["results"]:
            p = g["position"]
            if p is None:
                loc = "- | - | -"
            else:
                alt = "-" if p["alt_m"] is None else f"{p['alt_m']:.1f}"
                loc = f"{p['lat_deg']:.7f} | {p['lon_deg']:.7f} | {alt}"
            out.append(f"| {g['file']} | {g['t_log_us'] / 1e6:.3f} | {loc} | {g['confidence']} |")
    else:
        out.append("No media entries with capture times.")
    if d["uncorrelatable"]:
        out.append("")
        out.append(f"Without capture time: {', '.join(d['uncorrelatable'])}")


def _md_quality(d, out):
    if "truncated" in d:
        out.append(f"- Log truncated: {'yes, at byte ' + str(d['truncated_at']) if d['truncated'] else 'no'}")
        out.append(f"- Logger dropouts: {len(d['dropouts'])}")
        for x in d["dropouts"]:
            out.append(f"  - {x['duration_ms']} ms at t={x['t_us']} us")
        if d["skipped_messages"]:
            out.append(f"- Skipped messages: {d['skipped_messages']}")
        for w in d["parser_warnings"]:
            out.append(f"- Parser: {w}")
    if "trajectory_source" in d:
        out.append(f"- Trajectory source: {d['trajectory_source']}")
        for n in d["trajectory_notes"]:
            out.append(f"- {n}")
    for n in d["notes"]:
        out.append(f"- {n}")


_RENDERERS = {
    "case": _md_case,
    "components": _md_components,
    "parameters": _md_parameters,
    "mission": _md_mission,
    "flight": _md_flight,
    "range": _md_range,
    "media": _md_media,
    "data_quality": _md_quality,
}


def render_markdown(report: ForensicReport) -> bytes:
    # render from the parsed canonical JSON, not from live objects
    doc = json.loads(render_json(report))
    out = [
        f"# Forensic report: {doc['case_id']}",
        "",
        f"Generated {doc['generated_at']} by uavforensics {doc['toolkit_version']}",
    ]
    for n, name in enumerate(SECTION_ORDER, 1):
        sec = doc["sections"][name]
        out += ["", f"## {n}. {SECTION_TITLES[name]}", ""]
        if sec["status"] != AVAILABLE:
            out.append(f"not available: {sec['reason']}")
        else:
            _RENDERERS[name](sec["data"], out)
    return ("\n".join(out) + "\n").encode("utf-8")
