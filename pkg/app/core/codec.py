"""Canonical byte helpers shared by key, proof, snapshot and frame codecs."""

import hashlib
import struct
from typing import Iterable

from app.core.errors import DecodeError

SCALAR_BYTES = 32


def sha256(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return h.digest()


def labelled_hash(label: str, *parts: bytes) -> bytes:
    """SHA-256 over a length-prefixed label followed by length-prefixed parts."""
    h = hashlib.sha256()
    h.update(lp(label.encode()))
    for part in parts:
        h.update(lp(part))
    return h.digest()


def lp(data: bytes) -> bytes:
    """Length-prefix with a 4-byte little-endian count."""
    return struct.pack("<I", len(data)) + data


def scalar_to_bytes(k: int) -> bytes:
    return k.to_bytes(SCALAR_BYTES, "little")


def scalar_from_bytes(data: bytes) -> int:
    return int.from_bytes(data, "little")


def pack_bits(bits: Iterable[int], count: int) -> bytes:
    """Pack bits LSB-first into ceil(count/8) bytes."""
    out = bytearray((count + 7) // 8)
    for i, bit in enumerate(bits):
        if bit:
            out[i // 8] |= 1 << (i % 8)
    return bytes(out)


def unpack_bits(data: bytes, count: int) -> list[int]:
    """Inverse of pack_bits; padding bits past count must be zero."""
    if len(data) != (count + 7) // 8:
        raise DecodeError(f"Bitset length {len(data)} does not match {count} bits")
    bits = [(data[i // 8] >> (i % 8)) & 1 for i in range(count)]
    if count % 8 and data[-1] >> (count % 8):
        raise DecodeError("Nonzero padding bits in bitset")
    return bits


class Reader:
    """Sequential reader over a byte string; every short read is a DecodeError."""

    def __init__(self, data: bytes):
        self._data = memoryview(data)
        self._pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise DecodeError(f"Truncated input: wanted {n} bytes at offset {self._pos}")
        chunk = bytes(self._data[self._pos:self._pos + n])
        self._pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32le(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u32be(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64be(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def lp(self) -> bytes:
        return self.take(self.u32le())

    def lp_be(self) -> bytes:
        return self.take(self.u32be())

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def finish(self):
        if self.remaining:
            raise DecodeError(f"{self.remaining} trailing bytes")
