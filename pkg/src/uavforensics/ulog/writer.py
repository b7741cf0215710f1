"""ULog serializer, used to build test fixtures and synthetic evidence."""

from __future__ import annotations

import struct

from .layout import (
    LayoutError,
    compile_layout,
    encode_value,
    infer_value_type,
    render_format,
)
from .model import FlightLog, ULogWriteError

_U64 = struct.Struct("<Q")

# ordering of records sharing one timestamp in the data section
_RANK_RECORD, _RANK_PARAM, _RANK_DROPOUT = 0, 1, 2


def _message(mtype: str, payload: bytes) -> bytes:
    if len(payload) > 0xFFFF:
        raise ULogWriteError(f"{mtype!r} message payload of {len(payload)} bytes exceeds 65535")
    return struct.pack("<HB", len(payload), ord(mtype)) + payload


def _key_value(type_name: str, array_len, name: str, value) -> bytes:
    key = f"{type_name}[{array_len}] {name}" if array_len is not None else f"{type_name} {name}"
    key_b = key.encode("ascii")
    if len(key_b) > 255:
        raise ULogWriteError(f"key too long: {key!r}")
    return bytes([len(key_b)]) + key_b + encode_value(type_name, array_len, value)


def _param_payload(name: str, value) -> bytes:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ULogWriteError(f"parameter {name!r} must be int or float")
    if isinstance(value, int):
        if not -(2**31) <= value < 2**31:
            raise ULogWriteError(f"parameter {name!r} out of int32 range")
        return _key_value("int32_t", None, name, value)
    return _key_value("float", None, name, value)


def _check(log: FlightLog):
    for sub in log.subscriptions:
        if sub.message_name not in log.formats:
            raise ULogWriteError(f"subscription {sub.msg_id} references undefined format {sub.message_name!r}")
    subscribed = {(s.message_name, s.multi_id) for s in log.subscriptions}
    for key, series in log.series.items():
        if series.rows and key not in subscribed:
            raise ULogWriteError(f"series {key} has rows but no subscription")
        ts = [r["timestamp"] for r in series.rows]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ULogWriteError(f"series {key} timestamps decrease")


def write_ulog(log: FlightLog) -> bytes:
    """Serialize a FlightLog.

    Data records, logged text, in-flight parameter changes and dropouts are
    merged into one stream ordered by timestamp. A dropout or parameter
    change is written after the records sharing its timestamp, which is how
    the reader recovers that timestamp.
    """
    _check(log)
    out = bytearray()
    out += log.header.magic
    out += bytes([log.header.version])
    out += _U64.pack(log.header.start_timestamp_us)

    if log.flag_bits is not None:
        fb = log.flag_bits
        out += _message("B", struct.pack("<8s8s3Q", fb.compat, fb.incompat, *fb.appended_offsets))

    for name, fields in log.formats.items():
        out += _message("F", render_format(name, fields).encode("ascii"))

    for name, value in log.info.items():
        type_name, n = infer_value_type(value)
        out += _message("I", _key_value(type_name, n, name, value))
    for name, groups in log.info_multiple.items():
        for group in groups:
            for i, value in enumerate(group):
                type_name, n = infer_value_type(value)
                out += _message("M", bytes([1 if i else 0]) + _key_value(type_name, n, name, value))

    params = log.parameters
    for name, value in params.initial.items():
        out += _message("P", _param_payload(name, value))
    for d in params.defaults:
        payload = _param_payload(d.name, d.value)
        out += _message("Q", bytes([d.default_types]) + payload)

    msg_ids = {}
    for sub in log.subscriptions:
        msg_ids.setdefault((sub.message_name, sub.multi_id), sub.msg_id)
        out += _message("A", struct.pack("<BH", sub.multi_id, sub.msg_id) + sub.message_name.encode("ascii"))

    events = []
    seq = 0
    try:
        layouts = {name: compile_layout(name, log.formats) for name in {k[0] for k in log.series}}
    except LayoutError as exc:
        raise ULogWriteError(str(exc)) from exc
    for key, series in log.series.items():
        if not series.rows:
            continue
        layout = layouts[key[0]]
        head = struct.pack("<H", msg_ids[key])
        for row in series.rows:
            try:
                body = layout.encode(row)
            except (KeyError, struct.error) as exc:
                raise ULogWriteError(f"cannot encode row of {key}: {exc}") from exc
            events.append((row["timestamp"], _RANK_RECORD, seq, _message("D", head + body)))
            seq += 1
    for t in log.logged_text:
        text = t.text.encode("utf-8", "surrogateescape")
        level = t.level + 0x30 if 0 <= t.level <= 7 else t.level
        if t.tag is None:
            payload = struct.pack("<BQ", level, t.timestamp_us) + text
            events.append((t.timestamp_us, _RANK_RECORD, seq, _message("L", payload)))
        else:
            payload = struct.pack("<BHQ", level, t.tag, t.timestamp_us) + text
            events.append((t.timestamp_us, _RANK_RECORD, seq, _message("C", payload)))
        seq += 1
    for c in params.changes:
        events.append((c.timestamp_us, _RANK_PARAM, seq, _message("P", _param_payload(c.name, c.value))))
        seq += 1
    for d in log.dropouts:
        events.append((d.timestamp_us, _RANK_DROPOUT, seq, _message("O", struct.pack("<H", d.duration_ms))))
        seq += 1

    events.sort(key=lambda e: e[:3])
    for e in events:
        out += e[3]
    return bytes(out)
