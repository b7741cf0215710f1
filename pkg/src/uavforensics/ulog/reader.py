"""Single-pass ULog decoder.

Damaged files are the normal case in forensic work, so the reader salvages
whatever it can: a truncated tail sets ``FlightLog.truncated``, malformed
messages are skipped with a warning, and unknown message types are counted
and skipped.
"""

from __future__ import annotations

import struct
from collections import Counter
from typing import Optional

from .layout import Layout, LayoutError, compile_layout, decode_value, parse_format, parse_key
from .model import (
    HEADER_SIZE,
    MAGIC,
    Dropout,
    FlagBits,
    FlightLog,
    LoggedText,
    ParameterChange,
    ParameterDefault,
    Subscription,
    TimeSeries,
    ULogFormatError,
    UlogHeader,
)

_MSG_HEADER = struct.Struct("<HB")
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U64 = struct.Struct("<Q")
_FLAGS = struct.Struct("<8s8s3Q")
_LOGGING = struct.Struct("<BQ")
_LOGGING_TAGGED = struct.Struct("<BHQ")

PARAM_TYPES = ("int32_t", "float")


class _Corrupt(Exception):
    pass


def _level(b: int) -> int:
    return b - 0x30 if 0x30 <= b <= 0x37 else b


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.log = FlightLog()
        self.skipped: Counter = Counter()
        self.in_definitions = True
        self.last_ts = 0
        self.active: dict[int, Subscription] = {}
        self.layouts: dict[str, Optional[Layout]] = {}
        self.stop_at: Optional[int] = None

    def warn(self, msg: str):
        self.log.warnings.append(msg)

    def run(self) -> FlightLog:
        data = self.data
        if len(data) < HEADER_SIZE:
            if data[: len(MAGIC)] != MAGIC[: len(data)] or len(data) < len(MAGIC):
                raise ULogFormatError("bad magic", 0)
            raise ULogFormatError("truncated file header", len(data))
        if data[:7] != MAGIC:
            raise ULogFormatError("bad magic", 0)
        version = data[7]
        start_ts = _U64.unpack_from(data, 8)[0]
        self.log.header = UlogHeader(version=version, start_timestamp_us=start_ts)
        if version > 1:
            self.warn(f"unrecognized ULog version {version}; decoding as version 1")
        self.last_ts = start_ts

        offset = HEADER_SIZE
        end = len(data)
        first = True
        while offset < end:
            if self.stop_at is not None and offset >= self.stop_at:
                break
            if offset + 3 > end:
                self._truncate(offset)
                break
            size, mtype = _MSG_HEADER.unpack_from(data, offset)
            body = offset + 3
            if body + size > end:
                self._truncate(offset)
                break
            payload = memoryview(data)[body : body + size]
            try:
                self._dispatch(chr(mtype), payload, first, offset)
            except (_Corrupt, struct.error, LayoutError, ValueError, KeyError, IndexError, TypeError) as exc:
                self.skipped["corrupt"] += 1
                self.warn(f"skipped malformed {chr(mtype)!r} message at offset {offset}: {exc}")
            first = False
            offset = body + size

        self._finish()
        return self.log

    def _truncate(self, offset: int):
        self.log.truncated = True
        self.log.truncated_at = offset
        self.warn(f"log truncated at offset {offset}")

    def _dispatch(self, t: str, p: memoryview, first: bool, offset: int):
        if t == "B":
            if not first:
                raise _Corrupt("flag bits message must directly follow the header")
            compat, incompat, o1, o2, o3 = _FLAGS.unpack_from(p, 0)
            flags = FlagBits(bytes(compat), bytes(incompat), (o1, o2, o3))
            self.log.flag_bits = flags
            if flags.unknown_incompat:
                # cannot interpret the stream beyond this point
                stop = o1 if o1 > offset else offset + 3 + len(p)
                self.stop_at = stop
                self.log.truncated = True
                self.log.truncated_at = stop
                self.warn("unknown incompatible flag bits set; decoding stopped")
        elif t == "F":
            name, fields = parse_format(bytes(p).decode("ascii"))
            self.log.formats[name] = fields
            self.layouts.clear()
        elif t == "I":
            key, value = self._key_value(p, 0)
            self.log.info[key] = value
        elif t == "M":
            is_continued = p[0]
            key, value = self._key_value(p, 1)
            groups = self.log.info_multiple.setdefault(key, [])
            if is_continued and groups:
                groups[-1].append(value)
            else:
                groups.append([value])
        elif t == "P":
            key, value, type_name = self._key_value(p, 0, with_type=True)
            if type_name not in PARAM_TYPES:
                raise _Corrupt(f"parameter {key!r} has unsupported type {type_name}")
            params = self.log.parameters
            if self.in_definitions:
                params.initial[key] = value
            else:
                params.changes.append(ParameterChange(self.last_ts, key, value))
        elif t == "Q":
            default_types = p[0]
            key, value, type_name = self._key_value(p, 1, with_type=True)
            if type_name not in PARAM_TYPES:
                raise _Corrupt(f"parameter default {key!r} has unsupported type {type_name}")
            self.log.parameters.defaults.append(ParameterDefault(key, value, default_types))
        elif t == "A":
            self.in_definitions = False
            multi_id = p[0]
            msg_id = _U16.unpack_from(p, 1)[0]
            name = bytes(p[3:]).decode("ascii")
            if not name:
                raise _Corrupt("subscription without message name")
            sub = Subscription(msg_id, name, multi_id)
            self.log.subscriptions.append(sub)
            self.active[msg_id] = sub
            if name not in self.log.formats:
                self.warn(f"subscription to {name!r} has no format definition")
            key = (name, multi_id)
            if key not in self.log.series:
                layout = self._layout(name)
                columns = layout.columns if layout else ()
                self.log.series[key] = TimeSeries(name, multi_id, columns)
        elif t == "R":
            msg_id = _U16.unpack_from(p, 0)[0]
            self.active.pop(msg_id, None)
        elif t == "D":
            self.in_definitions = False
            msg_id = _U16.unpack_from(p, 0)[0]
            sub = self.active.get(msg_id)
            if sub is None:
                self.skipped["D:unsubscribed"] += 1
                return
            layout = self._layout(sub.message_name)
            if layout is None:
                self.skipped["D:no_format"] += 1
                return
            if len(p) - 2 < layout.size:
                raise _Corrupt(f"data record for {sub.message_name} is {len(p) - 2} bytes, format needs {layout.size}")
            row = layout.decode(p, 2)
            ts = row.get("timestamp")
            if ts is None:
                row["timestamp"] = self.last_ts
            else:
                self.last_ts = ts
            series = self.log.series[(sub.message_name, sub.multi_id)]
            if series.rows and series.rows[-1]["timestamp"] > row["timestamp"]:
                self.warn(f"non-monotonic timestamp in {sub.message_name}[{sub.multi_id}] at offset {offset}")
            series.rows.append(row)
        elif t == "L":
            self.in_definitions = False
            level, ts = _LOGGING.unpack_from(p, 0)
            text = bytes(p[_LOGGING.size :]).decode("utf-8", "surrogateescape")
            self.last_ts = ts
            self.log.logged_text.append(LoggedText(ts, _level(level), text))
        elif t == "C":
            self.in_definitions = False
            level, tag, ts = _LOGGING_TAGGED.unpack_from(p, 0)
            text = bytes(p[_LOGGING_TAGGED.size :]).decode("utf-8", "surrogateescape")
            self.last_ts = ts
            self.log.logged_text.append(LoggedText(ts, _level(level), text, tag))
        elif t == "O":
            duration = _U16.unpack_from(p, 0)[0]
            self.log.dropouts.append(Dropout(self.last_ts, duration))
        elif t == "S":
            pass
        else:
            self.skipped[f"unknown:{ord(t)}"] += 1

    def _key_value(self, p: memoryview, start: int, with_type: bool = False):
        key_len = p[start]
        key_end = start + 1 + key_len
        if key_end > len(p):
            raise _Corrupt("key length exceeds message")
        field = parse_key(bytes(p[start + 1 : key_end]).decode("ascii"))
        raw = bytes(p[key_end:])
        if field.type_name == "char":
            value = decode_value("char", None, raw)
        else:
            value = decode_value(field.type_name, field.array_len, raw)
        if with_type:
            return field.name, value, field.type_name
        return field.name, value

    def _layout(self, name: str) -> Optional[Layout]:
        if name not in self.layouts:
            try:
                layout = compile_layout(name, self.log.formats)
            except LayoutError as exc:
                self.warn(str(exc))
                layout = None
            else:
                for k in layout.raw_nested:
                    self.warn(f"{name}: nested field {k!r} kept as raw bytes")
            self.layouts[name] = layout
        return self.layouts[name]

    def _finish(self):
        self.log.skipped = dict(self.skipped)
        unknown = sum(v for k, v in self.skipped.items() if k.startswith("unknown:"))
        if unknown:
            self.warn(f"skipped {unknown} message(s) of unknown type")


def parse_ulog(data: bytes) -> FlightLog:
    """Decode a ULog byte stream.

    Raises ULogFormatError only when the stream is not ULog at all; damage
    further in yields a partial log with ``truncated`` set.
    """
    return _Reader(bytes(data)).run()


def read_ulog(path) -> FlightLog:
    with open(path, "rb") as f:
        data = f.read()
    try:
        return parse_ulog(data)
    except ULogFormatError as exc:
        raise ULogFormatError(str(exc).rsplit(" (offset", 1)[0], exc.offset, path) from None
