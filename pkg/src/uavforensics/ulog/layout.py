"""Binary layout of ULog format definitions, shared by reader and writer."""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from typing import Any, Optional

from .model import Field

# type name -> (struct code, size)
BASIC_TYPES = {
    "int8_t": ("b", 1),
    "uint8_t": ("B", 1),
    "int16_t": ("h", 2),
    "uint16_t": ("H", 2),
    "int32_t": ("i", 4),
    "uint32_t": ("I", 4),
    "int64_t": ("q", 8),
    "uint64_t": ("Q", 8),
    "float": ("f", 4),
    "double": ("d", 8),
    "bool": ("?", 1),
    "char": ("c", 1),
}

_FIELD_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)(?:\[(\d+)\])?\s+([A-Za-z_][A-Za-z0-9_]*)\s*$")

# kinds of a layout slot
SCALAR, TEXT, RAW = "scalar", "text", "raw"


class LayoutError(ValueError):
    pass


def parse_field(text: str) -> Field:
    m = _FIELD_RE.match(text)
    if not m:
        raise LayoutError(f"malformed field definition {text!r}")
    type_name, n, name = m.groups()
    return Field(type_name, name, int(n) if n is not None else None)


def parse_format(text: str) -> tuple[str, tuple[Field, ...]]:
    """Parse ``name:type field;type field;`` into a name and field list."""
    name, sep, body = text.partition(":")
    if not sep or not name:
        raise LayoutError(f"malformed format definition {text[:40]!r}")
    fields = tuple(parse_field(f) for f in body.split(";") if f.strip())
    return name, fields


def render_format(name: str, fields) -> str:
    return name + ":" + "".join(f.render() + ";" for f in fields)


def parse_key(key: str) -> Field:
    """Parse an info/parameter key such as ``char[5] sys_name``."""
    return parse_field(key)


def type_size(type_name: str, formats: dict, _stack=()) -> int:
    if type_name in BASIC_TYPES:
        return BASIC_TYPES[type_name][1]
    if type_name in _stack:
        raise LayoutError(f"recursive format definition {type_name!r}")
    if type_name not in formats:
        raise LayoutError(f"unknown type {type_name!r}")
    return sum(
        type_size(f.type_name, formats, _stack + (type_name,)) * (f.array_len or 1)
        for f in formats[type_name]
    )


@dataclass(frozen=True)
class Slot:
    key: Optional[str]
    kind: str
    count: int = 1


@dataclass
class Layout:
    """Flattened struct layout of one message format."""

    struct: struct.Struct
    slots: tuple[Slot, ...]
    columns: tuple[str, ...]
    raw_nested: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return self.struct.size

    def decode(self, buf, offset: int = 0) -> dict[str, Any]:
        values = self.struct.unpack_from(buf, offset)
        row = {}
        i = 0
        for slot in self.slots:
            if slot.kind == SCALAR:
                if slot.key is not None:
                    row[slot.key] = values[i]
                i += 1
            elif slot.kind == TEXT:
                row[slot.key] = values[i].rstrip(b"\x00").decode("utf-8", "surrogateescape")
                i += 1
            elif slot.kind == RAW:
                row[slot.key] = values[i]
                i += 1
        return row

    def encode(self, row: dict[str, Any]) -> bytes:
        values = []
        for slot in self.slots:
            if slot.key is None:
                continue
            v = row[slot.key]
            if slot.kind == TEXT:
                v = v.encode("utf-8", "surrogateescape")
            values.append(v)
        return self.struct.pack(*values)


def compile_layout(name: str, formats: dict) -> Layout:
    """Flatten a format: arrays expand to ``name[i]``, nested formats one
    level deep to ``outer.inner``; deeper nesting is kept as raw bytes."""
    codes: list[str] = ["<"]
    slots: list[Slot] = []
    raw_nested: list[str] = []

    def add(fields, prefix: str, depth: int, stack):
        for f in fields:
            key = prefix + f.name
            n = f.array_len
            if f.name.startswith("_padding"):
                size = type_size(f.type_name, formats) * (n or 1)
                codes.append(f"{size}x")
                continue
            if f.type_name == "char" and n is not None:
                codes.append(f"{n}s")
                slots.append(Slot(key, TEXT))
                continue
            if f.type_name in BASIC_TYPES:
                code = BASIC_TYPES[f.type_name][0]
                if n is None:
                    codes.append(code)
                    slots.append(Slot(key, SCALAR))
                else:
                    for j in range(n):
                        codes.append(code)
                        slots.append(Slot(f"{key}[{j}]", SCALAR))
                continue
            if f.type_name not in formats:
                raise LayoutError(f"{name}: field {f.name!r} has unknown type {f.type_name!r}")
            if f.type_name in stack:
                raise LayoutError(f"recursive format definition {f.type_name!r}")
            keys = [key] if n is None else [f"{key}[{j}]" for j in range(n)]
            if depth >= 1:
                size = type_size(f.type_name, formats)
                for k in keys:
                    codes.append(f"{size}s")
                    slots.append(Slot(k, RAW))
                    raw_nested.append(k)
            else:
                for k in keys:
                    add(formats[f.type_name], k + ".", depth + 1, stack + (f.type_name,))

    if name not in formats:
        raise LayoutError(f"no format definition for {name!r}")
    add(formats[name], "", 0, (name,))
    st = struct.Struct("".join(codes))
    columns = tuple(s.key for s in slots if s.key is not None)
    return Layout(st, tuple(slots), columns, tuple(raw_nested))


def encode_value(type_name: str, array_len: Optional[int], value) -> bytes:
    if type_name == "char":
        raw = value.encode("utf-8", "surrogateescape")
        return raw
    code, _ = BASIC_TYPES[type_name]
    if array_len is None:
        return struct.pack("<" + code, value)
    return struct.pack(f"<{array_len}{code}", *value)


def decode_value(type_name: str, array_len: Optional[int], raw: bytes):
    """Decode an info or parameter value. ``char`` arrays become strings."""
    if type_name == "char":
        return raw.rstrip(b"\x00").decode("utf-8", "surrogateescape")
    if type_name not in BASIC_TYPES:
        raise LayoutError(f"unsupported value type {type_name!r}")
    code, size = BASIC_TYPES[type_name]
    if array_len is None:
        return struct.unpack("<" + code, raw[:size])[0]
    return list(struct.unpack(f"<{array_len}{code}", raw[: size * array_len]))


def infer_value_type(value) -> tuple[str, Optional[int]]:
    """Pick a ULog type for a Python value when writing info messages."""
    if isinstance(value, str):
        return "char", len(value.encode("utf-8", "surrogateescape"))
    if isinstance(value, bool):
        return "bool", None
    if isinstance(value, int):
        return _int_type(value), None
    if isinstance(value, float):
        return "double", None
    if isinstance(value, (list, tuple)):
        if all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            return _widest_int(value), len(value)
        return "double", len(value)
    raise LayoutError(f"cannot store value of type {type(value).__name__}")


_INT_ORDER = ["int32_t", "int64_t", "uint64_t"]


def _int_type(v: int) -> str:
    if -(2**31) <= v < 2**31:
        return "int32_t"
    if -(2**63) <= v < 2**63:
        return "int64_t"
    return "uint64_t"


def _widest_int(values) -> str:
    if not values:
        return "int32_t"
    return max((_int_type(v) for v in values), key=_INT_ORDER.index)
