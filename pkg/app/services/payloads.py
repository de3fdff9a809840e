"""Message padding and the mapping between padded messages and table rows."""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from app.core.errors import DecodeError, InvalidArgument
from app.core.group import get_params
from app.core.payload import GroupField, PayloadField, PrimeField, XorField
from app.core.types import CellStatus, EpochConfig, Geometry, Variant
from app.dpf.geometry import column_bits, optimize_geometry
from app.services.collision import RecoveryCodec, RowDecode

PAD_BYTE = 0x01
LENGTH_BYTES = 2
HEADER_BYTES = 1 + LENGTH_BYTES


def message_capacity(row_bytes: int) -> int:
    return row_bytes - HEADER_BYTES


def pad_message(msg: bytes, row_bytes: int) -> bytes:
    """0x01 prefix, u16 message length, the message, then zero fill; every real write is nonzero."""
    capacity = message_capacity(row_bytes)
    if len(msg) > capacity:
        raise InvalidArgument(f"Message of {len(msg)} bytes exceeds row capacity {max(capacity, 0)}")
    return bytes([PAD_BYTE]) + len(msg).to_bytes(LENGTH_BYTES, "big") + msg + bytes(capacity - len(msg))


def unpad_message(padded: bytes) -> bytes:
    if len(padded) < HEADER_BYTES or padded[0] != PAD_BYTE:
        raise DecodeError("Missing message prefix")
    length = int.from_bytes(padded[1:HEADER_BYTES], "big")
    body = padded[HEADER_BYTES:]
    if length > len(body) or any(body[length:]):
        raise DecodeError("Message length does not match the zero fill")
    return body[:length]


@dataclass(frozen=True)
class RowLayout:
    """How padded messages of `message_bytes` bytes are stored in one variant's rows."""

    variant: Variant
    message_bytes: int
    field: PayloadField
    codec: Optional[RecoveryCodec] = None

    @property
    def capacity(self) -> int:
        return message_capacity(self.message_bytes)

    def embed(self, padded: bytes) -> np.ndarray:
        if len(padded) != self.message_bytes:
            raise InvalidArgument(f"Padded message must be {self.message_bytes} bytes")
        if self.codec is not None:
            return np.array(self.codec.encode_row(padded), dtype=object)
        if isinstance(self.field, GroupField):
            size = self.field.group.embed_bytes
            row = np.empty(self.field.width, dtype=object)
            for c in range(self.field.width):
                row[c] = self.field.group.encode_message(padded[c * size:(c + 1) * size])
            return row
        return np.frombuffer(padded, dtype=np.uint8).copy()

    def _padded(self, row: np.ndarray) -> bytes:
        if isinstance(self.field, GroupField):
            return b"".join(self.field.group.decode_message(e) for e in row)
        return bytes(row)

    def decode(self, row: np.ndarray) -> RowDecode:
        if self.field.is_zero(row):
            return RowDecode(CellStatus.EMPTY)
        if self.codec is not None:
            decoded = self.codec.decode_row(list(row))
            padded = decoded.messages
        else:
            try:
                padded = (self._padded(row),)
            except DecodeError:
                return RowDecode(CellStatus.UNRECOVERABLE)
            decoded = RowDecode(CellStatus.SINGLE, padded)
        if decoded.status in (CellStatus.EMPTY, CellStatus.UNRECOVERABLE):
            return decoded
        try:
            messages = tuple(unpad_message(p) for p in padded)
        except DecodeError:
            return RowDecode(CellStatus.UNRECOVERABLE)
        return RowDecode(decoded.status, messages)


@lru_cache(maxsize=32)
def row_layout(variant: Variant, message_bytes: int, recovery: bool = False, group: str = "p256") -> RowLayout:
    if message_bytes <= HEADER_BYTES:
        raise InvalidArgument("Rows need room for the prefix, the length and a message")
    if message_bytes - HEADER_BYTES > 0xFFFF:
        raise InvalidArgument("Message length must fit the u16 length field")
    if variant == Variant.MULTI_SERVER:
        params = get_params(group)
        chunks = math.ceil(message_bytes / params.group.embed_bytes)
        return RowLayout(variant, message_bytes, GroupField(params, chunks))
    if recovery:
        codec = RecoveryCodec(message_bytes)
        return RowLayout(variant, message_bytes, PrimeField(codec.width), codec)
    return RowLayout(variant, message_bytes, XorField(message_bytes))


def layout_for(config: EpochConfig) -> RowLayout:
    return row_layout(config.variant, config.geometry.row_bytes, config.recovery, config.group)


def plan_geometry(
    rows: int,
    row_bytes: int,
    variant: Variant = Variant.TWO_SERVER,
    recovery: bool = False,
    group: str = "p256",
) -> Geometry:
    """Key-size-optimal geometry for a table of padded rows of `row_bytes` bytes."""
    field = row_layout(variant, row_bytes, recovery, group).field
    return optimize_geometry(rows, column_bits(variant) - 1, field.row_bits(), row_bytes)
