"""
Wire frames: "RPST" | version u8 | msg_type u8 | length u32 BE | payload.

All integers inside payloads are big-endian.
"""

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import ClassVar

from app.core.codec import Reader
from app.core.errors import DecodeError, FrameError
from app.core.types import Phase

MAGIC = b"RPST"
VERSION = 1
HEADER = struct.Struct(">4sBBI")
NONCE_BYTES = 16
HASH_BYTES = 32
TAG_BYTES = 16

_PHASE_BYTES = {Phase.T: 0x74, Phase.U: 0x75}


class MsgType(IntEnum):
    WRITE_SHARE = 0x01
    WRITE_ACK = 0x02
    AUDIT_REQ = 0x10
    AUDIT_RESP = 0x11
    COINFLIP_COMMIT = 0x20
    COINFLIP_REVEAL = 0x21
    CLOSE = 0x30
    CLOSE_ACK = 0x31
    SHARE_XFER = 0x40
    ZK_BUNDLE = 0x50
    ZK_VERDICT = 0x51


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    payload: bytes

    def encode(self) -> bytes:
        return HEADER.pack(MAGIC, VERSION, int(self.msg_type), len(self.payload)) + self.payload

    def body(self) -> "FramePayload":
        return PAYLOADS[self.msg_type].decode(self.payload)


def encode_frame(frame: Frame) -> bytes:
    return frame.encode()


def decode_frame(data: bytes) -> Frame:
    """Exactly one frame; bad magic, version, type or length is a FrameError."""
    if len(data) < HEADER.size:
        raise FrameError("Truncated frame header")
    magic, version, msg_type, length = HEADER.unpack(data[: HEADER.size])
    if magic != MAGIC:
        raise FrameError(f"Bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"Unsupported version {version}")
    try:
        kind = MsgType(msg_type)
    except ValueError:
        raise FrameError(f"Unknown message type 0x{msg_type:02x}")
    if length != len(data) - HEADER.size:
        raise FrameError(f"Length field {length} != payload size {len(data) - HEADER.size}")
    return Frame(kind, bytes(data[HEADER.size:]))


def _phase_byte(phase: Phase) -> int:
    return _PHASE_BYTES[phase]


def _phase(value: int) -> Phase:
    for phase, byte in _PHASE_BYTES.items():
        if byte == value:
            return phase
    raise DecodeError(f"Unknown audit phase 0x{value:02x}")


def _flag(value: int) -> bool:
    if value not in (0, 1):
        raise DecodeError(f"Flag byte must be 0 or 1, got {value}")
    return bool(value)


class FramePayload:
    TYPE: ClassVar[MsgType]

    def encode(self) -> bytes:
        raise NotImplementedError

    @classmethod
    def decode(cls, data: bytes):
        reader = Reader(data)
        try:
            out = cls._read(reader)
            reader.finish()
        except DecodeError as e:
            raise FrameError(f"Malformed {cls.TYPE.name} payload: {e}") from e
        return out

    @classmethod
    def _read(cls, reader: Reader):
        raise NotImplementedError

    def to_frame(self) -> Frame:
        return Frame(self.TYPE, self.encode())


@dataclass(frozen=True)
class WriteShare(FramePayload):
    TYPE: ClassVar[MsgType] = MsgType.WRITE_SHARE
    epoch_id: int
    peer_hash: bytes
    share: bytes

    def encode(self) -> bytes:
        return struct.pack(">Q", self.epoch_id) + self.peer_hash + struct.pack(">I", len(self.share)) + self.share

    @classmethod
    def _read(cls, reader):
        return cls(reader.u64be(), reader.take(HASH_BYTES), reader.lp_be())


@dataclass(frozen=True)
class WriteAck(FramePayload):
    TYPE: ClassVar[MsgType] = MsgType.WRITE_ACK
    nonce: bytes
    accepted: bool
    reason: int = 0

    def encode(self) -> bytes:
        return self.nonce + bytes([int(self.accepted), self.reason])

    @classmethod
    def _read(cls, reader):
        return cls(reader.take(NONCE_BYTES), _flag(reader.u8()), reader.u8())


@dataclass(frozen=True)
class AuditReq(FramePayload):
    TYPE: ClassVar[MsgType] = MsgType.AUDIT_REQ
    nonce: bytes
    phase: Phase
    tags: tuple[bytes, ...]

    def encode(self) -> bytes:
        return self.nonce + bytes([_phase_byte(self.phase)]) + struct.pack(">I", len(self.tags)) + b"".join(self.tags)

    @classmethod
    def _read(cls, reader):
        nonce = reader.take(NONCE_BYTES)
        phase = _phase(reader.u8())
        count = reader.u32be()
        if count * TAG_BYTES != reader.remaining:
            raise DecodeError(f"Tag count {count} does not match payload")
        return cls(nonce, phase, tuple(reader.take(TAG_BYTES) for _ in range(count)))


@dataclass(frozen=True)
class AuditResp(FramePayload):
    TYPE: ClassVar[MsgType] = MsgType.AUDIT_RESP
    nonce: bytes
    phase: Phase
    accepted: bool
    reason: int = 0

    def encode(self) -> bytes:
        return self.nonce + bytes([_phase_byte(self.phase), int(self.accepted), self.reason])

    @classmethod
    def _read(cls, reader):
        return cls(reader.take(NONCE_BYTES), _phase(reader.u8()), _flag(reader.u8()), reader.u8())


@dataclass(frozen=True)
class CoinflipCommit(FramePayload):
    TYPE: ClassVar[MsgType] = MsgType.COINFLIP_COMMIT
    nonce: bytes
    commitment: bytes
    v_digest: bytes

    def encode(self) -> bytes:
        return self.nonce + self.commitment + self.v_digest

    @classmethod
    def _read(cls, reader):
        return cls(reader.take(NONCE_BYTES), reader.take(HASH_BYTES), reader.take(HASH_BYTES))


@dataclass(frozen=True)
class CoinflipReveal(FramePayload):
    TYPE: ClassVar[MsgType] = MsgType.COINFLIP_REVEAL
    nonce: bytes
    contribution: bytes

    def encode(self) -> bytes:
        return self.nonce + self.contribution

    @classmethod
    def _read(cls, reader):
        return cls(reader.take(NONCE_BYTES), reader.take(HASH_BYTES))


@dataclass(frozen=True)
class Close(FramePayload):
    TYPE: ClassVar[MsgType] = MsgType.CLOSE
    epoch_id: int
    count: int
    digest: bytes

    def encode(self) -> bytes:
        return struct.pack(">QI", self.epoch_id, self.count) + self.digest

    @classmethod
    def _read(cls, reader):
        return cls(reader.u64be(), reader.u32be(), reader.take(HASH_BYTES))


@dataclass(frozen=True)
class CloseAck(FramePayload):
    TYPE: ClassVar[MsgType] = MsgType.CLOSE_ACK
    epoch_id: int
    count: int
    digest: bytes
    ok: bool

    def encode(self) -> bytes:
        return struct.pack(">QI", self.epoch_id, self.count) + self.digest + bytes([int(self.ok)])

    @classmethod
    def _read(cls, reader):
        return cls(reader.u64be(), reader.u32be(), reader.take(HASH_BYTES), _flag(reader.u8()))


@dataclass(frozen=True)
class ShareXfer(FramePayload):
    TYPE: ClassVar[MsgType] = MsgType.SHARE_XFER
    epoch_id: int
    share: bytes

    def encode(self) -> bytes:
        return struct.pack(">QI", self.epoch_id, len(self.share)) + self.share

    @classmethod
    def _read(cls, reader):
        return cls(reader.u64be(), reader.lp_be())


@dataclass(frozen=True)
class ZkBundle(FramePayload):
    TYPE: ClassVar[MsgType] = MsgType.ZK_BUNDLE
    epoch_id: int
    share: bytes
    public: bytes
    opening: bytes

    def encode(self) -> bytes:
        out = struct.pack(">Q", self.epoch_id)
        for part in (self.share, self.public, self.opening):
            out += struct.pack(">I", len(part)) + part
        return out

    @classmethod
    def _read(cls, reader):
        return cls(reader.u64be(), reader.lp_be(), reader.lp_be(), reader.lp_be())


@dataclass(frozen=True)
class ZkVerdict(FramePayload):
    TYPE: ClassVar[MsgType] = MsgType.ZK_VERDICT
    nonce: bytes
    accepted: bool
    reason: int = 0

    def encode(self) -> bytes:
        return self.nonce + bytes([int(self.accepted), self.reason])

    @classmethod
    def _read(cls, reader):
        return cls(reader.take(NONCE_BYTES), _flag(reader.u8()), reader.u8())


PAYLOADS: dict[MsgType, type[FramePayload]] = {
    cls.TYPE: cls
    for cls in (
        WriteShare,
        WriteAck,
        AuditReq,
        AuditResp,
        CoinflipCommit,
        CoinflipReveal,
        Close,
        CloseAck,
        ShareXfer,
        ZkBundle,
        ZkVerdict,
    )
}
