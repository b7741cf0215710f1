"""Reader and writer for the ULog binary flight-log format."""

from .model import (
    MAGIC,
    Dropout,
    Field,
    FlagBits,
    FlightLog,
    LoggedText,
    ParameterChange,
    ParameterDefault,
    ParameterEntry,
    ParameterSet,
    Provenance,
    Subscription,
    TimeSeries,
    ULogFormatError,
    ULogWriteError,
    UlogHeader,
)
from .reader import parse_ulog, read_ulog
from .writer import write_ulog


def extract_parameters(log: FlightLog) -> ParameterSet:
    return log.parameters


def detect_dropouts(log: FlightLog) -> list[tuple[int, int]]:
    return [(d.timestamp_us, d.duration_ms) for d in log.dropouts]


__all__ = [
    "MAGIC",
    "Dropout",
    "Field",
    "FlagBits",
    "FlightLog",
    "LoggedText",
    "ParameterChange",
    "ParameterDefault",
    "ParameterEntry",
    "ParameterSet",
    "Provenance",
    "Subscription",
    "TimeSeries",
    "ULogFormatError",
    "ULogWriteError",
    "UlogHeader",
    "detect_dropouts",
    "extract_parameters",
    "parse_ulog",
    "read_ulog",
    "write_ulog",
]
