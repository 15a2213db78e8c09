"""LEB128 varints and a small cursor for parsing byte buffers."""

from __future__ import annotations

from .errors import TruncatedContainer


def encode_varint(value: int) -> bytes:
    if value < 0:
        raise ValueError("varint must be non-negative")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def append_varint(out: bytearray, value: int) -> None:
    while value > 0x7F:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    out.append(value)


def decode_varint(buf, pos: int) -> tuple[int, int]:
    """Return ``(value, new_pos)``; raises TruncatedContainer past the end."""
    result = 0
    shift = 0
    n = len(buf)
    while True:
        if pos >= n:
            raise TruncatedContainer("varint runs past end of buffer")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def zigzag(value: int) -> int:
    return (value << 1) if value >= 0 else ((-value << 1) - 1)


def unzigzag(value: int) -> int:
    return (value >> 1) if not value & 1 else -((value + 1) >> 1)


class Reader:
    """Sequential reader over a bytes-like object."""

    def __init__(self, buf, pos: int = 0, end: int | None = None):
        self.buf = buf
        self.pos = pos
        self.end = len(buf) if end is None else end

    def remaining(self) -> int:
        return self.end - self.pos

    def varint(self) -> int:
        value, pos = decode_varint(self.buf, self.pos)
        if pos > self.end:
            raise TruncatedContainer("varint runs past end of section")
        self.pos = pos
        return value

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > self.end:
            raise TruncatedContainer(f"need {n} bytes, have {self.end - self.pos}")
        out = bytes(self.buf[self.pos:self.pos + n])
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "little")
