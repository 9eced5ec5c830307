"""LEB128 varint helpers."""

from __future__ import annotations


class DecodeError(ValueError):
    pass


def encode_u(value: int) -> bytes:
    if value < 0:
        raise ValueError(f"unsigned LEB128 of negative value {value}")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def encode_s(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        done = (value == 0 and not byte & 0x40) or (value == -1 and byte & 0x40)
        if done:
            out.append(byte)
            return bytes(out)
        out.append(byte | 0x80)


def decode_u(buf: bytes, pos: int, bits: int = 32) -> tuple[int, int]:
    """Return (value, new_pos)."""
    result = 0
    shift = 0
    max_len = (bits + 6) // 7
    for i in range(max_len):
        if pos >= len(buf):
            raise DecodeError("truncated LEB128")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        shift += 7
        if not byte & 0x80:
            if result >> bits:
                raise DecodeError("LEB128 value out of range")
            return result, pos
    raise DecodeError("LEB128 too long")


def decode_s(buf: bytes, pos: int, bits: int = 32) -> tuple[int, int]:
    result = 0
    shift = 0
    max_len = (bits + 6) // 7
    for _ in range(max_len):
        if pos >= len(buf):
            raise DecodeError("truncated LEB128")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        shift += 7
        if not byte & 0x80:
            if byte & 0x40:
                result -= 1 << shift
            if not -(1 << (bits - 1)) <= result < (1 << (bits - 1)):
                raise DecodeError("LEB128 value out of range")
            return result, pos
    raise DecodeError("LEB128 too long")
