"""Geotag camera media by mapping capture times onto the flown trajectory.

Camera and autopilot clocks are aligned only through an explicit
ClockAlignment; nothing here guesses an offset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Optional

from .evidence import GeoPoint, format_utc, parse_utc, sha256_file
from .track import Trajectory, haversine_m
from .ulog import FlightLog

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".tif", ".tiff", ".png", ".heic", ".dng"}
EXIF_IFD = 0x8769
TAG_DATETIME = 306
TAG_DATETIME_ORIGINAL = 36867
EXIF_TIME_FORMAT = "%Y:%m:%d %H:%M:%S"


class Confidence(str, Enum):
    INTERPOLATED = "interpolated"
    EXTRAPOLATION_REFUSED = "extrapolation_refused"
    OUT_OF_FLIGHT = "out_of_flight"


class OutOfWindowError(ValueError):
    """Requested time lies outside the trajectory."""

    def __init__(self, t_us: int, window: tuple[int, int]):
        self.t_us = t_us
        self.window = window
        super().__init__(f"t={t_us} us outside trajectory window [{window[0]}, {window[1]}] us")


@dataclass(frozen=True)
class MediaEntry:
    file_name: str
    capture_time: datetime
    sha256: str

    def to_dict(self) -> dict:
        return {"file": self.file_name, "capture_time": format_utc(self.capture_time), "sha256": self.sha256}


@dataclass(frozen=True)
class MediaManifest:
    entries: tuple[MediaEntry, ...] = ()
    uncorrelatable: tuple[str, ...] = ()

    def __post_init__(self):
        names = [e.file_name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("media file names must be unique")

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries], "uncorrelatable": list(self.uncorrelatable)}

    @classmethod
    def from_dict(cls, d: dict) -> "MediaManifest":
        entries = tuple(
            MediaEntry(e["file"], parse_utc(e["capture_time"]), e.get("sha256", "")) for e in d.get("entries", [])
        )
        return cls(entries, tuple(d.get("uncorrelatable", [])))


def render_media_manifest(m: MediaManifest) -> bytes:
    return (json.dumps(m.to_dict(), indent=2) + "\n").encode("utf-8")


def parse_media_manifest(data: bytes) -> MediaManifest:
    return MediaManifest.from_dict(json.loads(data.decode("utf-8")))


@dataclass(frozen=True)
class ClockAlignment:
    """``log_epoch_utc`` is the UTC instant of log time zero (power-on);
    ``camera_offset_s`` is added to camera timestamps before mapping."""

    log_epoch_utc: datetime
    camera_offset_s: float = 0.0
    source: str = "investigator"

    def to_log_us(self, capture_time: datetime) -> int:
        delta = capture_time - self.log_epoch_utc
        return (delta // timedelta(microseconds=1)) + round(self.camera_offset_s * 1_000_000)

    def to_dict(self) -> dict:
        return {
            "log_epoch_utc": format_utc(self.log_epoch_utc),
            "camera_offset_s": self.camera_offset_s,
            "source": self.source,
        }


@dataclass(frozen=True)
class GeotagResult:
    file_name: str
    position: Optional[GeoPoint]
    t_log_us: int
    confidence: Confidence
    spacing_m: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "file": self.file_name,
            "position": None if self.position is None else self.position.to_dict(),
            "t_log_us": self.t_log_us,
            "confidence": self.confidence.value,
            "bracket_spacing_m": self.spacing_m,
        }


def _lerp(a: Optional[float], b: Optional[float], f: float) -> Optional[float]:
    if a is None or b is None:
        return None
    if f == 0.0:
        return a
    if f == 1.0:
        return b
    return a + (b - a) * f


def _bracket(traj: Trajectory, t_us: int) -> tuple[int, int]:
    s = traj.samples
    if len(s) < 2:
        raise ValueError("position_at needs at least two trajectory samples")
    if t_us < s[0].t_us or t_us > s[-1].t_us:
        raise OutOfWindowError(t_us, (s[0].t_us, s[-1].t_us))
    lo, hi = 0, len(s) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if s[mid].t_us <= t_us:
            lo = mid
        else:
            hi = mid
    return lo, hi


def position_at(traj: Trajectory, t_us: int) -> GeoPoint:
    """Linear interpolation between the samples bracketing ``t_us``."""
    lo, hi = _bracket(traj, t_us)
    a, b = traj.samples[lo], traj.samples[hi]
    if t_us == a.t_us:
        return a.position
    if t_us == b.t_us:
        return b.position
    f = (t_us - a.t_us) / (b.t_us - a.t_us)
    pa, pb = a.position, b.position
    return GeoPoint(_lerp(pa.lat_deg, pb.lat_deg, f), _lerp(pa.lon_deg, pb.lon_deg, f), _lerp(pa.alt_m, pb.alt_m, f))


def geotag(manifest: MediaManifest, traj: Trajectory, align: ClockAlignment) -> list[GeotagResult]:
    """One result per manifest entry; times outside the flight are never placed."""
    results = []
    for e in manifest.entries:
        t = align.to_log_us(e.capture_time)
        if len(traj.samples) < 2:
            results.append(GeotagResult(e.file_name, None, t, Confidence.EXTRAPOLATION_REFUSED))
            continue
        try:
            lo, hi = _bracket(traj, t)
        except OutOfWindowError:
            results.append(GeotagResult(e.file_name, None, t, Confidence.OUT_OF_FLIGHT))
            continue
        spacing = haversine_m(traj.samples[lo].position, traj.samples[hi].position)
        results.append(GeotagResult(e.file_name, position_at(traj, t), t, Confidence.INTERPOLATED, spacing))
    return results


def alignment_from_log(log: FlightLog, camera_offset_s: float = 0.0) -> Optional[ClockAlignment]:
    """Derive the log epoch from a GPS fix carrying UTC time, if logged."""
    for name in ("vehicle_gps_position", "sensor_gps"):
        s = log.find_series(name)
        if s is None or "time_utc_usec" not in s.columns:
            continue
        for r in s.rows:
            utc = r.get("time_utc_usec")
            if isinstance(utc, int) and utc > 0:
                epoch_us = utc - r["timestamp"]
                epoch = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(microseconds=epoch_us)
                return ClockAlignment(epoch, camera_offset_s, source=f"{name}.time_utc_usec")
    return None


def read_capture_time(path) -> Optional[datetime]:
    """Camera-clock capture time from EXIF, read as UTC (the camera clock has
    no zone; any offset belongs in ClockAlignment)."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            exif = im.getexif()
    except (UnidentifiedImageError, OSError):
        return None
    raw = exif.get_ifd(EXIF_IFD).get(TAG_DATETIME_ORIGINAL) or exif.get(TAG_DATETIME)
    if not raw:
        return None
    try:
        return datetime.strptime(str(raw).strip("\x00 "), EXIF_TIME_FORMAT).replace(tzinfo=timezone.utc)
    except ValueError:
        return None


def build_media_manifest(paths) -> MediaManifest:
    entries, missing = [], []
    for p in sorted(Path(x) for x in paths):
        if p.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        ts = read_capture_time(p)
        if ts is None:
            missing.append(p.name)
        else:
            entries.append(MediaEntry(p.name, ts, sha256_file(p)))
    return MediaManifest(tuple(entries), tuple(missing))
