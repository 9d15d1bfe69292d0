"""Little-endian packing primitives shared by the binary codecs."""

from __future__ import annotations

import struct


class WireError(ValueError):
    """Raised when bytes are too short or malformed for the requested read."""


def u8(value: int) -> bytes:
    return struct.pack("<B", value)


def u32(value: int) -> bytes:
    return struct.pack("<I", value)


def u64(value: int) -> bytes:
    return struct.pack("<Q", value)


def f64(value: float) -> bytes:
    return struct.pack("<d", value)


def text(value: str) -> bytes:
    raw = value.encode("utf-8")
    return u32(len(raw)) + raw


def blob(value: bytes) -> bytes:
    return u32(len(value)) + value


class Reader:
    """Sequential reader over immutable bytes; every read is bounds-checked."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise WireError(f"truncated input: wanted {n} bytes at offset {self._pos}")
        out = self._data[self._pos:self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def text(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WireError(f"invalid utf-8 at offset {self._pos}") from exc

    def blob(self) -> bytes:
        return self.take(self.u32())

    def eof(self) -> bool:
        return self._pos == len(self._data)
