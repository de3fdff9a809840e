"""
Prime-order groups for the multi-server DPF and the validity proofs.

Two instantiations share one interface: NIST P-256 (fastecdsa) for deployments
and a small Schnorr group (quadratic residues mod a ~64-bit safe prime) for fast
test suites. Elements are immutable wrappers with operator arithmetic so payload
vectors can live in numpy object arrays.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Optional

import gmpy2
from fastecdsa.curve import P256
from fastecdsa.encoding.sec1 import SEC1Encoder
from fastecdsa.point import Point
from loguru import logger

from app.core.codec import sha256
from app.core.errors import DecodeError, InvalidArgument
from app.core.field import sqrt_mod

SCHNORR_SEED_LABEL = b"riposte/schnorr64"


@dataclass(frozen=True, eq=False)
class GroupElement:
    group: "Group"
    raw: Any

    def __add__(self, other: "GroupElement") -> "GroupElement":
        return self.group.add(self, other)

    def __sub__(self, other: "GroupElement") -> "GroupElement":
        return self.group.add(self, self.group.neg(other))

    def __neg__(self) -> "GroupElement":
        return self.group.neg(self)

    def __rmul__(self, k: int) -> "GroupElement":
        return self.group.mul(int(k), self)

    def __mul__(self, k: int) -> "GroupElement":
        return self.group.mul(int(k), self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.group.name == other.group.name and self.raw == other.raw

    def __hash__(self) -> int:
        return hash((self.group.name, self.raw))

    def __repr__(self) -> str:
        return f"GroupElement({self.group.name}, {self.to_bytes().hex()})"

    def is_identity(self) -> bool:
        return self == self.group.identity

    def to_bytes(self) -> bytes:
        return self.group.encode(self)


class Group(ABC):
    name: str
    order: int
    element_bytes: int
    embed_bytes: int

    @property
    @abstractmethod
    def identity(self) -> GroupElement: ...

    @abstractmethod
    def add(self, a: GroupElement, b: GroupElement) -> GroupElement: ...

    @abstractmethod
    def neg(self, a: GroupElement) -> GroupElement: ...

    @abstractmethod
    def mul(self, k: int, a: GroupElement) -> GroupElement: ...

    @abstractmethod
    def hash_to_element(self, label: str) -> GroupElement:
        """Deterministic non-identity element with unknown discrete log."""

    @abstractmethod
    def encode(self, a: GroupElement) -> bytes: ...

    @abstractmethod
    def decode(self, data: bytes) -> GroupElement: ...

    @abstractmethod
    def encode_message(self, chunk: bytes) -> GroupElement: ...

    @abstractmethod
    def decode_message(self, e: GroupElement) -> bytes: ...

    def random_scalar(self, rng) -> int:
        return rng.randrange(self.order)

    def check_chunk(self, chunk: bytes):
        if len(chunk) > self.embed_bytes:
            raise InvalidArgument(
                f"Chunk of {len(chunk)} bytes exceeds {self.name} capacity {self.embed_bytes}"
            )


class P256Group(Group):
    """NIST P-256 via fastecdsa; raw is (x, y) or None for the point at infinity."""

    name = "p256"
    order = P256.q
    element_bytes = 33
    embed_bytes = 28

    def __init__(self):
        self._identity = GroupElement(self, None)

    @property
    def identity(self) -> GroupElement:
        return self._identity

    def _point(self, a: GroupElement) -> Point:
        x, y = a.raw
        return Point(x, y, curve=P256)

    def _wrap(self, pt: Point) -> GroupElement:
        return GroupElement(self, (pt.x, pt.y))

    def add(self, a: GroupElement, b: GroupElement) -> GroupElement:
        if a.raw is None:
            return b
        if b.raw is None:
            return a
        (x1, y1), (x2, y2) = a.raw, b.raw
        if x1 == x2:
            if (y1 + y2) % P256.p == 0:
                return self._identity
            return self._wrap(2 * self._point(a))
        return self._wrap(self._point(a) + self._point(b))

    def neg(self, a: GroupElement) -> GroupElement:
        if a.raw is None:
            return a
        x, y = a.raw
        return GroupElement(self, (x, (-y) % P256.p))

    def mul(self, k: int, a: GroupElement) -> GroupElement:
        k %= self.order
        if k == 0 or a.raw is None:
            return self._identity
        return self._wrap(k * self._point(a))

    def _lift_x(self, x: int) -> Optional[GroupElement]:
        rhs = (pow(x, 3, P256.p) + P256.a * x + P256.b) % P256.p
        y = sqrt_mod(rhs, P256.p)
        if y is None:
            return None
        if y % 2:
            y = P256.p - y
        return GroupElement(self, (x, y))

    def hash_to_element(self, label: str) -> GroupElement:
        ctr = 0
        while True:
            x = int.from_bytes(sha256(label.encode(), ctr.to_bytes(4, "big")), "big") % P256.p
            e = self._lift_x(x)
            if e is not None:
                return e
            ctr += 1

    def encode(self, a: GroupElement) -> bytes:
        if a.raw is None:
            return bytes(self.element_bytes)
        return SEC1Encoder.encode_public_key(self._point(a), compressed=True)

    def decode(self, data: bytes) -> GroupElement:
        if len(data) != self.element_bytes:
            raise DecodeError(f"P-256 element must be {self.element_bytes} bytes")
        if data == bytes(self.element_bytes):
            return self._identity
        try:
            pt = SEC1Encoder.decode_public_key(data, P256)
        except Exception as e:
            raise DecodeError(f"Invalid P-256 encoding: {e}") from e
        return self._wrap(pt)

    def encode_message(self, chunk: bytes) -> GroupElement:
        # x = len || chunk (zero padded to 28) || 3-byte counter; try-and-increment
        self.check_chunk(chunk)
        body = bytes([len(chunk)]) + chunk.ljust(self.embed_bytes, b"\x00")
        for ctr in range(1 << 24):
            e = self._lift_x(int.from_bytes(body + ctr.to_bytes(3, "big"), "big"))
            if e is not None:
                return e
        raise InvalidArgument("No curve point found for chunk")

    def decode_message(self, e: GroupElement) -> bytes:
        if e.raw is None:
            raise DecodeError("Identity element carries no message")
        xb = e.raw[0].to_bytes(32, "big")
        n = xb[0]
        if n > self.embed_bytes or any(xb[1 + n:1 + self.embed_bytes]):
            raise DecodeError("Element is not a message embedding")
        return xb[1:1 + n]


class SchnorrGroup(Group):
    """Quadratic residues modulo a safe prime t = 2q + 1; raw is the residue."""

    def __init__(self, modulus: int, name: str = "schnorr64"):
        self.name = name
        self.modulus = modulus
        self.order = (modulus - 1) // 2
        self.element_bytes = (modulus.bit_length() + 7) // 8
        self.embed_bytes = (self.order.bit_length() - 2) // 8 - 1
        self._identity = GroupElement(self, 1)

    @property
    def identity(self) -> GroupElement:
        return self._identity

    def add(self, a: GroupElement, b: GroupElement) -> GroupElement:
        return GroupElement(self, (a.raw * b.raw) % self.modulus)

    def neg(self, a: GroupElement) -> GroupElement:
        return GroupElement(self, pow(a.raw, -1, self.modulus))

    def mul(self, k: int, a: GroupElement) -> GroupElement:
        return GroupElement(self, pow(a.raw, k % self.order, self.modulus))

    def _is_member(self, v: int) -> bool:
        return 0 < v < self.modulus and pow(v, self.order, self.modulus) == 1

    def hash_to_element(self, label: str) -> GroupElement:
        ctr = 0
        while True:
            h = int.from_bytes(sha256(label.encode(), ctr.to_bytes(4, "big")), "big")
            v = pow(h % self.modulus, 2, self.modulus)
            if v not in (0, 1):
                return GroupElement(self, v)
            ctr += 1

    def encode(self, a: GroupElement) -> bytes:
        return a.raw.to_bytes(self.element_bytes, "big")

    def decode(self, data: bytes) -> GroupElement:
        if len(data) != self.element_bytes:
            raise DecodeError(f"{self.name} element must be {self.element_bytes} bytes")
        v = int.from_bytes(data, "big")
        if not self._is_member(v):
            raise DecodeError(f"Value is not in the {self.name} subgroup")
        return GroupElement(self, v)

    def encode_message(self, chunk: bytes) -> GroupElement:
        # k >= 2 keeps the identity (and its negation) free of messages
        self.check_chunk(chunk)
        body = bytes([len(chunk)]) + chunk.ljust(self.embed_bytes, b"\x00")
        k = int.from_bytes(body, "big") + 2
        v = k if pow(k, self.order, self.modulus) == 1 else self.modulus - k
        return GroupElement(self, v)

    def decode_message(self, e: GroupElement) -> bytes:
        v = e.raw
        k = (v if v <= self.order else self.modulus - v) - 2
        width = self.embed_bytes + 1
        if k < 0 or k >= 1 << (8 * width):
            raise DecodeError("Element is not a message embedding")
        body = k.to_bytes(width, "big")
        n = body[0]
        if n > self.embed_bytes or any(body[1 + n:]):
            raise DecodeError("Element is not a message embedding")
        return body[1:1 + n]


@lru_cache(maxsize=4)
def find_safe_prime(bits: int, seed: bytes = SCHNORR_SEED_LABEL) -> int:
    """Smallest safe prime 2q+1 with q at or above a hash-derived (bits-1)-bit start."""
    start = int.from_bytes(sha256(seed), "big") >> (256 - (bits - 1))
    q = gmpy2.mpz(start | (1 << (bits - 2)) | 1)
    while True:
        q = gmpy2.next_prime(q)
        if gmpy2.is_prime(2 * q + 1, 40):
            t = int(2 * q + 1)
            logger.debug(f"Schnorr test modulus ({bits} bits): {t}")
            return t


@lru_cache(maxsize=4)
def get_group(name: str) -> Group:
    """Group by configuration name: 'p256' or 'schnorr64'."""
    if name == "p256":
        return P256Group()
    if name == "schnorr64":
        return SchnorrGroup(find_safe_prime(64), name="schnorr64")
    raise InvalidArgument(f"Unknown group: {name}")


@dataclass
class PedersenParams:
    """Commitment bases P, Q and the seed-homomorphic PRG generators P_0, P_1, ..."""

    group: Group
    P: GroupElement
    Q: GroupElement
    _generators: dict[int, GroupElement] = field(default_factory=dict, repr=False)

    @classmethod
    def derive(cls, group: Group) -> "PedersenParams":
        return cls(
            group=group,
            P=group.hash_to_element("riposte/P"),
            Q=group.hash_to_element("riposte/Q"),
        )

    def prg_generator(self, i: int) -> GroupElement:
        if i not in self._generators:
            self._generators[i] = self.group.hash_to_element(f"riposte/G/{i}")
        return self._generators[i]

    def generators(self, n: int) -> list[GroupElement]:
        return [self.prg_generator(i) for i in range(n)]

    def commit(self, m: int, r: int) -> GroupElement:
        return m * self.P + r * self.Q


@lru_cache(maxsize=4)
def get_params(group_name: str) -> PedersenParams:
    return PedersenParams.derive(get_group(group_name))
