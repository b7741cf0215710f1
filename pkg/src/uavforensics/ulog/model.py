"""In-memory representation of a decoded ULog file."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Union

MAGIC = b"ULog\x01\x12\x35"
HEADER_SIZE = 16

ParamValue = Union[int, float]


class ULogFormatError(ValueError):
    """The stream is not a ULog file (bad magic or unreadable header)."""

    def __init__(self, message: str, offset: int = 0, path=None):
        self.offset = offset
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (offset {offset})")


class ULogWriteError(ValueError):
    """The log violates an invariant and cannot be serialized."""


class Provenance(str, Enum):
    INITIAL = "initial"
    CHANGED_IN_FLIGHT = "changed_in_flight"
    DEFAULT = "default"


@dataclass(frozen=True)
class Field:
    type_name: str
    name: str
    array_len: Optional[int] = None

    def render(self) -> str:
        if self.array_len is None:
            return f"{self.type_name} {self.name}"
        return f"{self.type_name}[{self.array_len}] {self.name}"


@dataclass(frozen=True)
class UlogHeader:
    version: int = 1
    start_timestamp_us: int = 0
    magic: bytes = MAGIC


@dataclass(frozen=True)
class FlagBits:
    compat: bytes = bytes(8)
    incompat: bytes = bytes(8)
    appended_offsets: tuple[int, int, int] = (0, 0, 0)

    DATA_APPENDED = 0x01

    @property
    def has_appended_data(self) -> bool:
        return bool(self.incompat[0] & self.DATA_APPENDED)

    @property
    def unknown_incompat(self) -> bool:
        return bool(self.incompat[0] & ~self.DATA_APPENDED) or any(self.incompat[1:])


@dataclass(frozen=True)
class Subscription:
    msg_id: int
    message_name: str
    multi_id: int = 0


@dataclass
class TimeSeries:
    message_name: str
    multi_id: int
    columns: tuple[str, ...]
    rows: list[dict[str, Any]] = field(default_factory=list)

    def timestamps(self) -> list[int]:
        return [r["timestamp"] for r in self.rows]

    def column(self, name: str) -> list[Any]:
        return [r[name] for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class LoggedText:
    timestamp_us: int
    level: int
    text: str
    tag: Optional[int] = None


@dataclass(frozen=True)
class Dropout:
    timestamp_us: int
    duration_ms: int


@dataclass(frozen=True)
class ParameterChange:
    timestamp_us: int
    name: str
    value: ParamValue


@dataclass(frozen=True)
class ParameterDefault:
    name: str
    value: ParamValue
    default_types: int


@dataclass(frozen=True)
class ParameterEntry:
    name: str
    value: ParamValue
    provenance: Provenance


@dataclass
class ParameterSet:
    """Parameter values with provenance.

    ``initial`` holds values logged before the first data record; ``changes``
    are in-flight updates in file order; ``defaults`` are the firmware
    defaults the logger recorded, if any.
    """

    initial: dict[str, ParamValue] = field(default_factory=dict)
    changes: list[ParameterChange] = field(default_factory=list)
    defaults: list[ParameterDefault] = field(default_factory=list)

    @classmethod
    def from_values(cls, values: dict[str, ParamValue]) -> "ParameterSet":
        return cls(initial=dict(values))

    def entries(self) -> dict[str, ParameterEntry]:
        out: dict[str, ParameterEntry] = {}
        for d in self.defaults:
            out.setdefault(d.name, ParameterEntry(d.name, d.value, Provenance.DEFAULT))
        for name, value in self.initial.items():
            out[name] = ParameterEntry(name, value, Provenance.INITIAL)
        for c in self.changes:
            out[c.name] = ParameterEntry(c.name, c.value, Provenance.CHANGED_IN_FLIGHT)
        return out

    def get(self, name: str, default=None):
        entry = self.entries().get(name)
        return default if entry is None else entry.value

    def __contains__(self, name: str) -> bool:
        return name in self.entries()

    def __len__(self) -> int:
        return len(self.entries())


@dataclass
class FlightLog:
    header: UlogHeader = field(default_factory=UlogHeader)
    parameters: ParameterSet = field(default_factory=ParameterSet)
    formats: dict[str, tuple[Field, ...]] = field(default_factory=dict)
    subscriptions: list[Subscription] = field(default_factory=list)
    series: dict[tuple[str, int], TimeSeries] = field(default_factory=dict)
    logged_text: list[LoggedText] = field(default_factory=list)
    dropouts: list[Dropout] = field(default_factory=list)
    info: dict[str, Any] = field(default_factory=dict)
    info_multiple: dict[str, list[list[Any]]] = field(default_factory=dict)
    flag_bits: Optional[FlagBits] = None
    truncated: bool = False
    truncated_at: Optional[int] = None
    warnings: list[str] = field(default_factory=list, compare=False)
    skipped: dict[str, int] = field(default_factory=dict, compare=False)

    def find_series(self, name: str, multi_id: Optional[int] = None) -> Optional[TimeSeries]:
        """Series by name; lowest multi_id when none is given."""
        if multi_id is not None:
            return self.series.get((name, multi_id))
        candidates = sorted(k for k in self.series if k[0] == name)
        return self.series[candidates[0]] if candidates else None

    @property
    def first_timestamp_us(self) -> Optional[int]:
        firsts = [s.rows[0]["timestamp"] for s in self.series.values() if s.rows and "timestamp" in s.rows[0]]
        return min(firsts) if firsts else None
