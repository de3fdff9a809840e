"""
Bit-exact key serialization.

Header (little-endian): variant u8, x u32, y u32, row_bytes u32, where row_bytes
is the serialized size of one v entry. Bodies:
  toy      : L rows
  two-server: b packed LSB-first, x 16-byte seeds, y rows
  multi     : x 32-byte b scalars, x 32-byte s scalars, y rows
"""

import struct
from typing import Union

from app.core.codec import SCALAR_BYTES, Reader, pack_bits, scalar_from_bytes, scalar_to_bytes, unpack_bits
from app.core.errors import DecodeError
from app.core.payload import GroupField, PayloadField
from app.core.prg import SEED_BYTES
from app.core.types import Geometry
from app.dpf.multi_server import DpfSKey
from app.dpf.toy import ToyKey
from app.dpf.two_server import Dpf2Key

VARIANT_TOY = 0x01
VARIANT_TWO_SERVER = 0x02
VARIANT_MULTI_SERVER = 0x03

HEADER = struct.Struct("<BIII")

AnyKey = Union[ToyKey, Dpf2Key, DpfSKey]


def serialize_key(key: AnyKey, field: PayloadField) -> bytes:
    if isinstance(key, Dpf2Key):
        x, y = len(key.b), len(key.v)
        body = pack_bits(key.b, x) + b"".join(key.s) + field.rows_to_bytes(key.v)
        return HEADER.pack(VARIANT_TWO_SERVER, x, y, field.row_bytes) + body
    if isinstance(key, DpfSKey):
        x, y = len(key.b), len(key.v)
        body = (
            b"".join(scalar_to_bytes(k) for k in key.b)
            + b"".join(scalar_to_bytes(k) for k in key.s)
            + field.rows_to_bytes(key.v)
        )
        return HEADER.pack(VARIANT_MULTI_SERVER, x, y, field.row_bytes) + body
    if isinstance(key, ToyKey):
        return HEADER.pack(VARIANT_TOY, 1, len(key.rows), field.row_bytes) + field.rows_to_bytes(key.rows)
    raise TypeError(f"Not a DPF key: {type(key).__name__}")


def parse_key(data: bytes, geometry: Geometry, field: PayloadField, party: int = 0) -> AnyKey:
    """Parse a key for this server; any deviation from the expected layout is a DecodeError."""
    reader = Reader(data)
    variant, x, y, row_bytes = HEADER.unpack(reader.take(HEADER.size))
    if row_bytes != field.row_bytes:
        raise DecodeError(f"Key row width {row_bytes} != {field.row_bytes}")

    if variant == VARIANT_TOY:
        if (x, y) != (1, geometry.rows):
            raise DecodeError("Toy key length does not match table")
        rows = field.rows_from_bytes(reader.take(y * row_bytes), y)
        reader.finish()
        return ToyKey(rows=rows)

    if (x, y) != (geometry.x, geometry.y):
        raise DecodeError(f"Key geometry {x}x{y} != {geometry.x}x{geometry.y}")

    if variant == VARIANT_TWO_SERVER:
        if isinstance(field, GroupField):
            raise DecodeError("Two-server key on a group payload")
        b = unpack_bits(reader.take((x + 7) // 8), x)
        s = tuple(reader.take(SEED_BYTES) for _ in range(x))
        v = field.rows_from_bytes(reader.take(y * row_bytes), y)
        reader.finish()
        return Dpf2Key(b=tuple(b), s=s, v=v, party=party)

    if variant == VARIANT_MULTI_SERVER:
        if not isinstance(field, GroupField):
            raise DecodeError("Multi-server key on a non-group payload")
        q = field.group.order
        b = tuple(scalar_from_bytes(reader.take(SCALAR_BYTES)) for _ in range(x))
        s = tuple(scalar_from_bytes(reader.take(SCALAR_BYTES)) for _ in range(x))
        if any(k >= q for k in b + s):
            raise DecodeError("Scalar out of range")
        v = field.rows_from_bytes(reader.take(y * row_bytes), y)
        reader.finish()
        return DpfSKey(b=b, s=s, v=v, server_index=party)

    raise DecodeError(f"Unknown key variant 0x{variant:02x}")


def key_size_bytes(geometry: Geometry, field: PayloadField, variant: int) -> int:
    """Serialized size: (1+alpha)x + beta*y bits plus the fixed header."""
    rows = geometry.y * field.row_bytes
    if variant == VARIANT_TWO_SERVER:
        return HEADER.size + (geometry.x + 7) // 8 + SEED_BYTES * geometry.x + rows
    if variant == VARIANT_MULTI_SERVER:
        return HEADER.size + 2 * SCALAR_BYTES * geometry.x + rows
    return HEADER.size + geometry.rows * field.row_bytes
