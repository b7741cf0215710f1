"""Command-line front end: ``uavforensics <subcommand> CASE_DIR [options]``.

A case directory holds evidence files under one folder per evidence kind
(``flight_log/``, ``mission_plan/``, ``battery_observation/``, ...), plus
camera images under ``media/``. ``ingest`` hashes everything into
``manifest.json``; the analysis subcommands write into ``CASE_DIR/analysis``
unless ``--out`` says otherwise.

Exit codes: 0 success, 1 usage error, 2 evidence-format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional

from . import __version__
from .evidence import (
    CaseManifest,
    EvidenceKind,
    IngestError,
    ManifestError,
    load_components,
    parse_manifest,
    parse_utc,
    render_manifest,
    scan_case_dir,
    sha256_file,
    utc_now,
    verify_manifest,
)
from .media import (
    ClockAlignment,
    MediaManifest,
    alignment_from_log,
    build_media_manifest,
    geotag,
    parse_media_manifest,
    render_media_manifest,
)
from .mission import DEFAULT_REACH_RADIUS_M, PlanParseError, compare_plan_to_track, mission_summary, parse_plan
from .params import CatalogError, analyze_parameters, cruise_speed, default_catalog, parse_catalog, parse_parameter_dump
from .power import (
    DEFAULT_EMPTY_VOLTAGE_V,
    BatteryObservation,
    BatterySpec,
    PowerModel,
    RangeInputError,
    estimate_range,
    load_battery_document,
)
from .report import build_report, render_json, render_markdown
from .track import ExportError, TrajectoryError, build_trajectory, export_geojson, export_kml, flight_summary
from .ulog import FlightLog, ULogFormatError, read_ulog

log = logging.getLogger("uavforensics")

EPOCH_ENV = "UAVFORENSICS_TEST_EPOCH"
MANIFEST_NAME = "manifest.json"
MEDIA_DIR = "media"
MEDIA_MANIFEST_NAME = "media.json"

EXIT_OK, EXIT_USAGE, EXIT_EVIDENCE = 0, 1, 2
EVIDENCE_ERRORS = (
    ULogFormatError,
    PlanParseError,
    RangeInputError,
    ManifestError,
    CatalogError,
    IngestError,
    json.JSONDecodeError,
    UnicodeDecodeError,
)


class UsageError(Exception):
    pass


class EvidenceError(Exception):
    """Evidence file present but unreadable; message names the file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- case access ------------------------------------------------------------


@dataclass
class Case:
    root: Path
    out: Path
    now: datetime
    manifest: Optional[CaseManifest] = None

    @classmethod
    def open(cls, root, out=None, now=None) -> "Case":
        root = Path(root)
        if not root.is_dir():
            raise UsageError(f"case directory not found: {root}")
        manifest = None
        mpath = root / MANIFEST_NAME
        if mpath.is_file():
            try:
                manifest = parse_manifest(mpath.read_bytes())
            except ManifestError as exc:
                raise EvidenceError(f"{mpath}: {exc}") from exc
        return cls(root, Path(out) if out else root / "analysis", now or utc_now(), manifest)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.root / p

    def files(self, kind: EvidenceKind) -> list[Path]:
        if self.manifest is not None:
            return [self.resolve(i.source_path) for i in self.manifest.of_kind(kind)]
        kdir = self.root / kind.value
        if not kdir.is_dir():
            return []
        return sorted(p for p in kdir.rglob("*") if p.is_file() and not p.name.startswith("."))

    def effective_manifest(self) -> CaseManifest:
        return self.manifest or scan_case_dir(self.root, now=self.now)

    def write(self, name: str, data: bytes) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        p.write_bytes(data)
        return p


def _json_bytes(obj) -> bytes:
    def default(o):
        if isinstance(o, bytes):
            return o.hex()
        raise TypeError(f"not serializable: {type(o).__name__}")

    return (json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, default=default) + "\n").encode("utf-8")


def _evidence(fn, path: Path):
    try:
        return fn(path)
    except ULogFormatError as exc:
        raise EvidenceError(str(exc) if exc.path else f"{path}: {exc}") from exc
    except EVIDENCE_ERRORS + (KeyError, TypeError, ValueError) as exc:
        raise EvidenceError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise EvidenceError(f"{path}: {exc.strerror or exc}") from exc


# -- analyses shared by the subcommands --------------------------------------


@dataclass
class Analysis:
    """Everything the case supports; absent pieces carry a reason instead."""

    flight_log: Optional[FlightLog] = None
    log_path: Optional[Path] = None
    trajectory: object = None
    flight: object = None
    param_source: Optional[str] = None
    findings: Optional[list] = None
    plan: object = None
    summary: object = None
    deviation: object = None
    range_estimate: object = None
    range_notes: list = field(default_factory=list)
    components: Optional[list] = None
    media: Optional[MediaManifest] = None
    alignment: Optional[ClockAlignment] = None
    geotags: Optional[list] = None
    reasons: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


def _first(case: Case, kind: EvidenceKind, what: str, a: Analysis) -> Optional[Path]:
    files = case.files(kind)
    if not files:
        return None
    if len(files) > 1:
        a.notes.append(f"{len(files)} {what} files; analysed {files[0].name} only")
    return files[0]


def _try(a: Analysis, section: str, fn, *args, strict: bool):
    try:
        return fn(*args)
    except EvidenceError as exc:
        if strict:
            raise
        a.reasons[section] = f"unreadable evidence: {exc}"
        a.notes.append(str(exc))
        return None


def analyze_case(case: Case, opts, strict: bool = False) -> Analysis:
    a = Analysis()

    p = _first(case, EvidenceKind.FLIGHT_LOG, "flight log", a)
    if p is not None:
        a.log_path = p
        a.flight_log = _try(a, "flight", _evidence, read_ulog, p, strict=strict)
    if a.flight_log is not None:
        try:
            a.trajectory = build_trajectory(a.flight_log)
            a.flight = flight_summary(a.flight_log, a.trajectory)
        except TrajectoryError as exc:
            a.reasons["flight"] = f"no trajectory: {exc}"

    catalog = default_catalog()
    if getattr(opts, "catalog", None):
        catalog = _evidence(lambda q: parse_catalog(q.read_bytes()), case.resolve(opts.catalog))
    params = None
    if a.flight_log is not None:
        params, a.param_source = a.flight_log.parameters, f"flight log {a.log_path.name}"
    else:
        dump = _first(case, EvidenceKind.PARAMETER_DUMP, "parameter dump", a)
        if dump is not None:
            params = _try(a, "parameters", _evidence, lambda q: parse_parameter_dump(q.read_bytes()), dump, strict=strict)
            a.param_source = f"parameter dump {dump.name}"
    if params is not None:
        a.findings = analyze_parameters(params, catalog)

    p = _first(case, EvidenceKind.MISSION_PLAN, "mission plan", a)
    if p is not None:
        a.plan = _try(a, "mission", _evidence, lambda q: parse_plan(q.read_bytes()), p, strict=strict)
    if a.plan is not None:
        a.summary = mission_summary(a.plan)
        if a.trajectory is not None and len(a.trajectory):
            a.deviation = compare_plan_to_track(a.plan, a.trajectory, opts.reach_radius)

    p = _first(case, EvidenceKind.BATTERY_OBSERVATION, "battery observation", a)
    if p is not None:
        fallback = cruise_speed(params) if params is not None else None
        doc = _try(a, "range", _evidence, lambda q: load_battery_document(q.read_bytes(), fallback), p, strict=strict)
        if doc is not None:
            spec = doc.spec
            if opts.empty_v is not None:
                spec = BatterySpec(spec.cell_count, spec.capacity_mah, spec.full_voltage_v, opts.empty_v)
            if doc.model is None:
                a.reasons["range"] = f"{p.name} has no power model"
            else:
                try:
                    a.range_estimate = estimate_range(spec, doc.observation, doc.model)
                    a.range_notes = list(doc.notes)
                except RangeInputError as exc:
                    if strict:
                        raise EvidenceError(f"{p}: {exc}") from exc
                    a.reasons["range"] = f"{p.name}: {exc}"

    p = _first(case, EvidenceKind.COMPONENT_RECORD, "component record", a)
    if p is not None:
        a.components = _try(a, "components", _evidence, lambda q: load_components(q.read_bytes()), p, strict=strict)

    p = _first(case, EvidenceKind.MEDIA_MANIFEST, "media manifest", a)
    if p is not None:
        a.media = _try(a, "media", _evidence, lambda q: parse_media_manifest(q.read_bytes()), p, strict=strict)
    elif (case.root / MEDIA_DIR).is_dir():
        a.media = build_media_manifest((case.root / MEDIA_DIR).iterdir())
    if a.media is not None:
        a.alignment = _alignment(a.flight_log, opts)
        if a.trajectory is None:
            a.reasons["media"] = "no trajectory to correlate media against"
        elif a.alignment is None:
            a.reasons["media"] = "no clock alignment: log has no GPS UTC time; pass --log-epoch"
        else:
            a.geotags = geotag(a.media, a.trajectory, a.alignment)
    return a


def _alignment(flight_log, opts) -> Optional[ClockAlignment]:
    offset = opts.clock_offset or 0.0
    if getattr(opts, "log_epoch", None):
        return ClockAlignment(parse_utc(opts.log_epoch), offset, source="investigator (--log-epoch)")
    if flight_log is not None:
        return alignment_from_log(flight_log, offset)
    return None


def _track_exports(case: Case, a: Analysis) -> list[Path]:
    if a.trajectory is None or not len(a.trajectory):
        return []
    stem = a.log_path.stem
    tags = a.geotags or ()
    try:
        gj = export_geojson(a.trajectory, a.plan, tags)
        kml = export_kml(a.trajectory, stem, tags)
    except ExportError as exc:
        log.warning("track export skipped: %s", exc)
        return []
    return [case.write(f"{stem}.track.geojson", gj), case.write(f"{stem}.track.kml", kml)]


# -- subcommands ------------------------------------------------------------


def cmd_ingest(args, now) -> int:
    root = Path(args.case_dir)
    if not root.is_dir():
        raise UsageError(f"case directory not found: {root}")
    media_dir = root / MEDIA_DIR
    if media_dir.is_dir():
        mm = build_media_manifest(media_dir.iterdir())
        target = root / EvidenceKind.MEDIA_MANIFEST.value / MEDIA_MANIFEST_NAME
        target.parent.mkdir(exist_ok=True)
        data = render_media_manifest(mm)
        if not target.is_file() or target.read_bytes() != data:
            target.write_bytes(data)
    mpath = root / MANIFEST_NAME
    previous = None
    if mpath.is_file():
        try:
            previous = parse_manifest(mpath.read_bytes())
        except ManifestError as exc:
            raise EvidenceError(f"{mpath}: {exc}") from exc
        changed = [i for i, s in verify_manifest(previous, root) if s.value != "ok"]
        for item_id in changed:
            print(f"note: {item_id} changed or missing since last ingest", file=sys.stderr)
    manifest = scan_case_dir(root, case_id=args.case_id, previous=previous, now=now)
    mpath.write_bytes(render_manifest(manifest))
    print(f"{manifest.case_id}: {len(manifest.items)} evidence item(s) -> {mpath}")
    for item in manifest.items:
        print(f"  {item.sha256}  {item.item_id}")
    return EXIT_OK


def _require(value, what: str):
    if value is None:
        raise UsageError(f"no {what} in case")
    return value


def cmd_log(args, now) -> int:
    case = Case.open(args.case_dir, args.out, now)
    paths = [case.resolve(args.input)] if args.input else case.files(EvidenceKind.FLIGHT_LOG)
    if not paths:
        raise UsageError("no flight log in case")
    for p in paths:
        fl = _evidence(read_ulog, p)
        doc = {
            "file": p.name,
            "sha256": sha256_file(p),
            "format_version": fl.header.version,
            "start_timestamp_us": fl.header.start_timestamp_us,
            "info": fl.info,
            "series": [
                {
                    "message": s.message_name,
                    "multi_id": s.multi_id,
                    "records": len(s.rows),
                    "first_us": s.rows[0].get("timestamp") if s.rows else None,
                    "last_us": s.rows[-1].get("timestamp") if s.rows else None,
                }
                for s in sorted(fl.series.values(), key=lambda s: (s.message_name, s.multi_id))
            ],
            "parameters": {
                "initial": len(fl.parameters.initial),
                "changed_in_flight": [
                    {"t_us": c.timestamp_us, "name": c.name, "value": c.value} for c in fl.parameters.changes
                ],
                "defaults": len(fl.parameters.defaults),
            },
            "logged_text": [{"t_us": t.timestamp_us, "level": t.level, "text": t.text} for t in fl.logged_text],
            "dropouts": [{"t_us": d.timestamp_us, "duration_ms": d.duration_ms} for d in fl.dropouts],
            "truncated": fl.truncated,
            "truncated_at": fl.truncated_at,
            "skipped_messages": dict(sorted(fl.skipped.items())),
            "warnings": fl.warnings,
        }
        out = case.write(f"{p.stem}.log.json", _json_bytes(doc))
        state = f"truncated at byte {fl.truncated_at}" if fl.truncated else "complete"
        print(f"{p.name}: {len(fl.series)} series, {len(fl.parameters.initial)} parameters, "
              f"{len(fl.dropouts)} dropout(s), {state} -> {out}")
    return EXIT_OK


def cmd_params(args, now) -> int:
    case = Case.open(args.case_dir, args.out, now)
    a = analyze_case(case, args, strict=True)
    findings = _require(a.findings, "flight log or parameter dump")
    case.write("params.json", _json_bytes({"source": a.param_source, "findings": [f.to_dict() for f in findings]}))
    for f in findings:
        print(f"{f.severity.value:8} {f.code:34} {f.parameter}={f.observed}  {f.meaning}")
    return EXIT_OK


def cmd_mission(args, now) -> int:
    case = Case.open(args.case_dir, args.out, now)
    a = analyze_case(case, args, strict=True)
    _require(a.plan, "mission plan")
    doc = {"summary": a.summary.to_dict(), "deviation": a.deviation.to_dict() if a.deviation else None}
    case.write("mission.json", _json_bytes(doc))
    print(a.summary.narrative)
    if a.deviation is not None:
        d = a.deviation
        print(f"unreached: {list(d.unreached) or 'none'}; returned to launch: {'yes' if d.completed_rtl else 'no'}")
    return EXIT_OK


def cmd_track(args, now) -> int:
    case = Case.open(args.case_dir, args.out, now)
    a = analyze_case(case, args, strict=True)
    _require(a.flight_log, "flight log")
    if a.flight is None:
        raise EvidenceError(f"{a.log_path}: {a.reasons.get('flight', 'no trajectory')}")
    case.write(f"{a.log_path.stem}.summary.json", _json_bytes(a.flight.to_dict()))
    written = _track_exports(case, a)
    f = a.flight
    print(f"flight time {f.total_flight_time_s:.1f} s, distance {f.total_distance_m:.1f} m, "
          f"max speed {f.max_speed_mps:.2f} m/s")
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


RANGE_FLAGS = ("capacity_mah", "full_v", "observed_v", "motor_w", "motors")


def cmd_range(args, now) -> int:
    case = Case.open(args.case_dir, args.out, now) if args.case_dir else None
    if all(getattr(args, k) is not None for k in RANGE_FLAGS):
        spec = BatterySpec(
            args.cells,
            args.capacity_mah,
            args.full_v,
            args.empty_v if args.empty_v is not None else DEFAULT_EMPTY_VOLTAGE_V,
        )
        est = estimate_range(spec, BatteryObservation(args.observed_v), PowerModel(
            args.motor_w, args.motors, args.avionics_w, args.cruise_mps or 0.0
        ))
    elif case is not None:
        a = analyze_case(case, args, strict=True)
        if a.range_estimate is None:
            raise UsageError(a.reasons.get("range", "no battery observation in case"))
        est = a.range_estimate
    else:
        missing = ", ".join("--" + k.replace("_", "-") for k in RANGE_FLAGS if getattr(args, k) is None)
        raise UsageError(f"give a case directory or all of: {missing}")
    print(f"Energy used: {est.e_used_wh:.2f} Wh")
    print(f"Flight time: {est.t_flight_s:.1f} s")
    print(f"Max range: {est.r_max_m:.1f} m")
    if case is not None or args.out:
        out = Path(args.out) if args.out else case.out
        out.mkdir(parents=True, exist_ok=True)
        (out / "range.json").write_bytes(_json_bytes(est.to_dict()))
    return EXIT_OK


def cmd_media(args, now) -> int:
    case = Case.open(args.case_dir, args.out, now)
    a = analyze_case(case, args, strict=True)
    _require(a.media, "media manifest or media folder")
    if a.geotags is None:
        raise UsageError(a.reasons["media"])
    doc = {
        "alignment": a.alignment.to_dict(),
        "results": [g.to_dict() for g in a.geotags],
        "uncorrelatable": list(a.media.uncorrelatable),
    }
    case.write("media.json", _json_bytes(doc))
    for g in a.geotags:
        where = "-" if g.position is None else f"{g.position.lat_deg:.7f}, {g.position.lon_deg:.7f}"
        print(f"{g.file_name}: {g.confidence.value} {where}")
    return EXIT_OK


def cmd_report(args, now) -> int:
    case = Case.open(args.case_dir, args.out, now)
    manifest = case.effective_manifest()
    verification = verify_manifest(manifest, case.root) if case.manifest is not None else None
    a = analyze_case(case, args, strict=False)
    notes = list(a.notes)
    if case.manifest is None:
        notes.append("no manifest.json; evidence hashed at report time (run ingest to fix acquisition times)")
    report = build_report(
        manifest,
        now,
        verification=verification,
        components=a.components,
        findings=a.findings,
        parameter_source=a.param_source,
        mission_summary=a.summary,
        deviation=a.deviation,
        flight=a.flight,
        range_estimate=a.range_estimate,
        range_notes=a.range_notes,
        geotags=a.geotags,
        alignment=a.alignment,
        uncorrelatable=a.media.uncorrelatable if a.media is not None else (),
        log=a.flight_log,
        trajectory=a.trajectory,
        reasons=a.reasons,
        quality_notes=notes,
    )
    written = [case.write("report.json", render_json(report)), case.write("report.md", render_markdown(report))]
    written += _track_exports(case, a)
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uavforensics", description="Forensic analysis of small-UAV evidence.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument(
        "--test-epoch",
        metavar="UTC",
        help=f"pin the current time (RFC 3339) for reproducible outputs; also read from ${EPOCH_ENV}",
    )
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, fn, help_text, case_optional=False):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        if case_optional:
            sp.add_argument("case_dir", nargs="?", help="case directory")
        else:
            sp.add_argument("case_dir", help="case directory")
        sp.add_argument("--out", help="output directory (default: CASE_DIR/analysis)")
        sp.set_defaults(func=fn)
        return sp

    def analysis_flags(sp):
        sp.add_argument("--catalog", help="finding catalog JSON (default: built-in px4-default)")
        sp.add_argument("--reach-radius", type=float, default=DEFAULT_REACH_RADIUS_M, metavar="M",
                        help="distance at which a waypoint counts as reached (default: %(default)s m)")
        sp.add_argument("--empty-v", type=float, metavar="V",
                        help=f"battery empty voltage (default: document value or {DEFAULT_EMPTY_VOLTAGE_V} V)")
        sp.add_argument("--clock-offset", type=float, default=0.0, metavar="S",
                        help="seconds added to camera timestamps (default: 0)")
        sp.add_argument("--log-epoch", metavar="UTC",
                        help="UTC instant of log time zero; default: derived from logged GPS UTC time")

    sp = add("ingest", cmd_ingest, "hash case evidence into CASE_DIR/manifest.json")
    sp.add_argument("--case-id", help="case identifier for a new manifest (default: directory name)")
    sp = add("log", cmd_log, "decode flight logs and write a per-log summary")
    sp.add_argument("--input", help="flight log file (default: every flight log in the case)")
    for name, fn, text in (
        ("params", cmd_params, "evaluate parameters against the finding catalog"),
        ("mission", cmd_mission, "summarize the mission plan and compare it with the flown track"),
        ("track", cmd_track, "flight summary plus GeoJSON/KML track exports"),
        ("media", cmd_media, "geotag media by capture time"),
        ("report", cmd_report, "assemble report.json and report.md from everything present"),
    ):
        analysis_flags(add(name, fn, text))
    sp = add("range", cmd_range, "battery endurance and range estimate", case_optional=True)
    analysis_flags(sp)
    sp.add_argument("--capacity-mah", type=float)
    sp.add_argument("--full-v", type=float)
    sp.add_argument("--observed-v", type=float)
    sp.add_argument("--motor-w", type=float, help="cruise power per motor")
    sp.add_argument("--motors", type=int)
    sp.add_argument("--avionics-w", type=float, default=0.0)
    sp.add_argument("--cruise-mps", type=float, help="average forward speed")
    sp.add_argument("--cells", type=int, default=4)
    return p


def _now(args) -> datetime:
    pinned = args.test_epoch or os.environ.get(EPOCH_ENV)
    if not pinned:
        return utc_now()
    try:
        return parse_utc(pinned)
    except ValueError as exc:
        raise UsageError(f"bad test epoch {pinned!r}: {exc}") from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args, _now(args))
    except UsageError as exc:
        print(f"uavforensics {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EvidenceError as exc:
        print(f"uavforensics {args.command}: evidence error: {exc}", file=sys.stderr)
        return EXIT_EVIDENCE
    except RangeInputError as exc:
        print(f"uavforensics {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
