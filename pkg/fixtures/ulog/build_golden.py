"""Assemble golden.ulg byte by byte with struct only (no package code).

Run from this directory: python3 build_golden.py
"""

import struct


def msg(kind, payload):
    return struct.pack("<HB", len(payload), ord(kind)) + payload


def kv(key, value_bytes):
    k = key.encode("ascii")
    return bytes([len(k)]) + k + value_bytes


out = b"ULog\x01\x12\x35" + bytes([1]) + struct.pack("<Q", 1_000_000)
out += msg("F", b"vehicle_attitude:uint64_t timestamp;float[4] q;")
out += msg("I", kv("char[5] sys_name", b"NuttX"))
out += msg("P", kv("float MPC_XY_CRUISE", struct.pack("<f", 5.0)))
out += msg("A", struct.pack("<BH", 0, 0) + b"vehicle_attitude")
out += msg("D", struct.pack("<HQ4f", 0, 2_000_000, 1.0, 0.0, 0.0, 0.0))
out += msg("L", struct.pack("<BQ", ord("6"), 2_000_000) + b"Armed")
out += msg("D", struct.pack("<HQ4f", 0, 2_100_000, 0.5, 0.5, 0.5, 0.5))
out += msg("O", struct.pack("<H", 40))

with open("golden.ulg", "wb") as f:
    f.write(out)
print(len(out), "bytes")
