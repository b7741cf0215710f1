"""Case-level data model: evidence items, component inventory and hashing.

The case manifest is the acquisition record. Every file that enters the
analysis is hashed (SHA-256) at ingest and can be re-verified at any point.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

MANIFEST_SCHEMA_VERSION = "uavforensics.manifest/1"
CHUNK_SIZE = 1024 * 1024


class EvidenceKind(str, Enum):
    FLIGHT_LOG = "flight_log"
    MISSION_PLAN = "mission_plan"
    PARAMETER_DUMP = "parameter_dump"
    BATTERY_OBSERVATION = "battery_observation"
    MEDIA_MANIFEST = "media_manifest"
    COMPONENT_RECORD = "component_record"
    OTHER = "other"


class ComponentKind(str, Enum):
    FRAME = "frame"
    MOTOR = "motor"
    ESC = "esc"
    PROPELLER = "propeller"
    BATTERY = "battery"
    AUTOPILOT = "autopilot"
    GPS = "gps"
    RADIO_RECEIVER = "radio_receiver"
    TELEMETRY = "telemetry"
    CAMERA = "camera"
    OTHER = "other"


class VerifyStatus(str, Enum):
    OK = "ok"
    HASH_MISMATCH = "hash_mismatch"
    MISSING = "missing"


class IngestError(OSError):
    """A file could not be read for ingest."""

    def __init__(self, path, reason: str):
        super().__init__(f"cannot ingest {path}: {reason}")
        self.path = Path(path)
        self.reason = reason


class ManifestError(ValueError):
    pass


def utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def format_utc(ts: datetime) -> str:
    """Render a timestamp as RFC 3339 in UTC with a trailing ``Z``."""
    if ts.tzinfo is None:
        raise ValueError("naive datetime; timestamps must carry a timezone")
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_utc(text: str) -> datetime:
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp without timezone: {text!r}")
    return ts.astimezone(timezone.utc)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(CHUNK_SIZE), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float
    alt_m: Optional[float] = None

    def __post_init__(self):
        for name in ("lat_deg", "lon_deg", "alt_m"):
            v = getattr(self, name)
            if v is not None and math.isnan(v):
                raise ValueError(f"{name} is NaN")
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat_deg}")
        if not -180.0 < self.lon_deg <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon_deg}")
        if self.alt_m is not None and math.isinf(self.alt_m):
            raise ValueError("altitude is infinite")

    @classmethod
    def normalized(cls, lat_deg: float, lon_deg: float, alt_m: Optional[float] = None) -> "GeoPoint":
        """Build a point, wrapping longitude into (-180, 180]."""
        lon = math.fmod(lon_deg, 360.0)
        if lon <= -180.0:
            lon += 360.0
        elif lon > 180.0:
            lon -= 360.0
        return cls(lat_deg, lon, alt_m)

    def to_dict(self) -> dict:
        return {"lat_deg": self.lat_deg, "lon_deg": self.lon_deg, "alt_m": self.alt_m}

    @classmethod
    def from_dict(cls, d: dict) -> "GeoPoint":
        return cls(d["lat_deg"], d["lon_deg"], d.get("alt_m"))


@dataclass(frozen=True)
class EvidenceItem:
    item_id: str
    kind: EvidenceKind
    source_path: str
    sha256: str
    acquired_at: datetime
    size_bytes: int = 0

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "kind": self.kind.value,
            "source_path": self.source_path,
            "sha256": self.sha256,
            "size_bytes": self.size_bytes,
            "acquired_at": format_utc(self.acquired_at),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceItem":
        return cls(
            item_id=d["item_id"],
            kind=EvidenceKind(d["kind"]),
            source_path=d["source_path"],
            sha256=d["sha256"],
            acquired_at=parse_utc(d["acquired_at"]),
            size_bytes=d.get("size_bytes", 0),
        )


@dataclass(frozen=True)
class ComponentRecord:
    component: ComponentKind
    description: str
    serial_number: Optional[str] = None
    mass_g: Optional[float] = None
    dimension_cm: Optional[float] = None

    def __post_init__(self):
        if self.mass_g is not None and not self.mass_g > 0:
            raise ValueError(f"mass_g must be positive, got {self.mass_g}")
        if self.dimension_cm is not None and not self.dimension_cm > 0:
            raise ValueError(f"dimension_cm must be positive, got {self.dimension_cm}")

    def to_dict(self) -> dict:
        return {
            "component": self.component.value,
            "description": self.description,
            "serial_number": self.serial_number,
            "mass_g": self.mass_g,
            "dimension_cm": self.dimension_cm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComponentRecord":
        return cls(
            component=ComponentKind(d["component"]),
            description=d.get("description", ""),
            serial_number=d.get("serial_number"),
            mass_g=d.get("mass_g"),
            dimension_cm=d.get("dimension_cm"),
        )


def load_components(data: bytes) -> list[ComponentRecord]:
    """Parse a component inventory document (a JSON list, or ``{"components": [...]}``)."""
    doc = json.loads(data.decode("utf-8"))
    if isinstance(doc, dict):
        doc = doc.get("components", [])
    return [ComponentRecord.from_dict(d) for d in doc]


@dataclass(frozen=True)
class CaseManifest:
    case_id: str
    created_at: datetime
    items: tuple[EvidenceItem, ...] = ()
    notes: str = ""

    def __post_init__(self):
        if not self.case_id:
            raise ManifestError("case_id must be non-empty")
        object.__setattr__(self, "items", tuple(sorted(self.items, key=lambda i: i.item_id)))
        ids = [i.item_id for i in self.items]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ManifestError(f"duplicate item ids: {dupes}")

    def get(self, item_id: str) -> EvidenceItem:
        for item in self.items:
            if item.item_id == item_id:
                return item
        raise KeyError(item_id)

    def of_kind(self, kind: EvidenceKind) -> list[EvidenceItem]:
        return [i for i in self.items if i.kind == kind]

    def with_items(self, items: Iterable[EvidenceItem]) -> "CaseManifest":
        return CaseManifest(self.case_id, self.created_at, tuple(items), self.notes)

    def to_dict(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA_VERSION,
            "case_id": self.case_id,
            "created_at": format_utc(self.created_at),
            "notes": self.notes,
            "items": [i.to_dict() for i in self.items],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaseManifest":
        if d.get("schema") != MANIFEST_SCHEMA_VERSION:
            raise ManifestError(f"unsupported manifest schema: {d.get('schema')!r}")
        return cls(
            case_id=d["case_id"],
            created_at=parse_utc(d["created_at"]),
            items=tuple(EvidenceItem.from_dict(i) for i in d.get("items", [])),
            notes=d.get("notes", ""),
        )


def render_manifest(manifest: CaseManifest) -> bytes:
    return (json.dumps(manifest.to_dict(), indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def parse_manifest(data: bytes) -> CaseManifest:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError(f"manifest is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a JSON object")
    try:
        return CaseManifest.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"malformed manifest: {exc}") from exc


def ingest_evidence(
    path,
    kind: EvidenceKind,
    item_id: Optional[str] = None,
    acquired_at: Optional[datetime] = None,
    root=None,
) -> EvidenceItem:
    """Hash a file and return its evidence record. The file is only read.

    ``source_path`` is stored relative to ``root`` when one is given, so a
    case directory can be moved without invalidating its manifest.
    """
    path = Path(path)
    kind = EvidenceKind(kind)
    try:
        if not path.is_file():
            raise IngestError(path, "not a regular file")
        digest = sha256_file(path)
        size = path.stat().st_size
    except IngestError:
        raise
    except OSError as exc:
        raise IngestError(path, exc.strerror or str(exc)) from exc
    source = path
    if root is not None:
        try:
            source = path.resolve().relative_to(Path(root).resolve())
        except ValueError:
            source = path
    source_path = source.as_posix()
    return EvidenceItem(
        item_id=item_id or f"{kind.value}/{path.name}",
        kind=kind,
        source_path=source_path,
        sha256=digest,
        acquired_at=acquired_at or utc_now(),
        size_bytes=size,
    )


def verify_manifest(manifest: CaseManifest, root=None) -> list[tuple[str, VerifyStatus]]:
    """Re-hash every item; relative source paths resolve against ``root``."""
    results = []
    for item in manifest.items:
        p = Path(item.source_path)
        if root is not None and not p.is_absolute():
            p = Path(root) / p
        if not p.is_file():
            results.append((item.item_id, VerifyStatus.MISSING))
            continue
        try:
            digest = sha256_file(p)
        except OSError:
            results.append((item.item_id, VerifyStatus.MISSING))
            continue
        status = VerifyStatus.OK if digest == item.sha256 else VerifyStatus.HASH_MISMATCH
        results.append((item.item_id, status))
    return results


def scan_case_dir(
    case_dir,
    case_id: Optional[str] = None,
    previous: Optional[CaseManifest] = None,
    now: Optional[datetime] = None,
) -> CaseManifest:
    """Build a manifest from a ``case/<kind>/<files>`` layout.

    Items already present in ``previous`` with an unchanged digest keep
    their original acquisition time, so re-ingest of an unchanged case
    reproduces the same manifest.
    """
    case_dir = Path(case_dir)
    now = now or utc_now()
    known = {i.item_id: i for i in previous.items} if previous else {}
    items = []
    for kind in EvidenceKind:
        kdir = case_dir / kind.value
        if not kdir.is_dir():
            continue
        for f in sorted(kdir.rglob("*")):
            if not f.is_file() or f.name.startswith("."):
                continue
            rel_name = f.relative_to(kdir).as_posix()
            item = ingest_evidence(f, kind, item_id=f"{kind.value}/{rel_name}", acquired_at=now, root=case_dir)
            old = known.get(item.item_id)
            if old is not None and old.sha256 == item.sha256:
                item = old
            items.append(item)
    if previous is not None:
        return CaseManifest(previous.case_id, previous.created_at, tuple(items), previous.notes)
    return CaseManifest(case_id or case_dir.name, now, tuple(items))
