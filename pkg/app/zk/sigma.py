"""
Sigma-protocol building blocks: linear relations over a prime-order group,
two-branch OR composition and a Fiat-Shamir transcript.

All sub-proofs of one statement share a single global challenge; an OR proof
stores the split c0 and recovers c1 = c - c0.
"""

from dataclasses import dataclass
from typing import Sequence

from app.core.codec import SCALAR_BYTES, Reader, labelled_hash, scalar_from_bytes, scalar_to_bytes
from app.core.errors import DecodeError, InvalidArgument
from app.core.group import Group, GroupElement

Term = tuple[int, GroupElement]


@dataclass(frozen=True)
class LinearRelation:
    """Equations targets[e] = sum of w_t * base over terms[e]."""

    group: Group
    targets: tuple[GroupElement, ...]
    terms: tuple[tuple[Term, ...], ...]
    n_witnesses: int

    def combine(self, scalars: Sequence[int]) -> list[GroupElement]:
        out = []
        for equation in self.terms:
            acc = self.group.identity
            for t, base in equation:
                acc = acc + scalars[t] * base
            out.append(acc)
        return out

    def announce(self, rng) -> tuple[list[int], list[GroupElement]]:
        nonces = [self.group.random_scalar(rng) for _ in range(self.n_witnesses)]
        return nonces, self.combine(nonces)

    def respond(self, nonces: Sequence[int], witness: Sequence[int], c: int) -> list[int]:
        q = self.group.order
        return [(k + c * w) % q for k, w in zip(nonces, witness)]

    def simulate(self, c: int, rng) -> tuple[list[GroupElement], list[int]]:
        z = [self.group.random_scalar(rng) for _ in range(self.n_witnesses)]
        announcements = [lhs - c * y for lhs, y in zip(self.combine(z), self.targets)]
        return announcements, z

    def check(self, announcements: Sequence[GroupElement], c: int, z: Sequence[int]) -> bool:
        if len(announcements) != len(self.targets) or len(z) != self.n_witnesses:
            return False
        return all(
            lhs == a + c * y for lhs, a, y in zip(self.combine(z), announcements, self.targets)
        )


def dlog_relation(group: Group, base: GroupElement, target: GroupElement) -> LinearRelation:
    """Knowledge of w with target = w * base."""
    return LinearRelation(group, (target,), (((0, base),),), 1)


@dataclass(frozen=True)
class LinearProof:
    a: tuple[GroupElement, ...]
    z: tuple[int, ...]


@dataclass(frozen=True)
class OrProof:
    a0: tuple[GroupElement, ...]
    a1: tuple[GroupElement, ...]
    c0: int
    z0: tuple[int, ...]
    z1: tuple[int, ...]


class LinearProver:
    def __init__(self, relation: LinearRelation, witness: Sequence[int], rng):
        self.relation = relation
        self.witness = list(witness)
        self.nonces, self.announcements = relation.announce(rng)

    def finish(self, c: int) -> LinearProof:
        return LinearProof(tuple(self.announcements), tuple(self.relation.respond(self.nonces, self.witness, c)))


class OrProver:
    """Proves rel0 OR rel1 knowing a witness for `branch`; the other branch is simulated."""

    def __init__(self, rel0: LinearRelation, rel1: LinearRelation, branch: int, witness: Sequence[int], rng):
        self.relations = (rel0, rel1)
        self.branch = branch
        self.witness = list(witness)
        if branch not in (0, 1):
            raise InvalidArgument(f"OR branch must be 0 or 1, got {branch}")
        group = rel0.group
        fake = 1 - branch
        self.fake_c = group.random_scalar(rng)
        fake_a, self.fake_z = self.relations[fake].simulate(self.fake_c, rng)
        self.nonces, real_a = self.relations[branch].announce(rng)
        self.a = [None, None]
        self.a[branch] = real_a
        self.a[fake] = fake_a

    def finish(self, c: int) -> OrProof:
        q = self.relations[0].group.order
        real_c = (c - self.fake_c) % q
        real_z = self.relations[self.branch].respond(self.nonces, self.witness, real_c)
        if self.branch == 0:
            return OrProof(tuple(self.a[0]), tuple(self.a[1]), real_c, tuple(real_z), tuple(self.fake_z))
        return OrProof(tuple(self.a[0]), tuple(self.a[1]), self.fake_c, tuple(self.fake_z), tuple(real_z))


def linear_verify(relation: LinearRelation, proof: LinearProof, c: int) -> bool:
    return relation.check(proof.a, c, proof.z)


def or_verify(rel0: LinearRelation, rel1: LinearRelation, proof: OrProof, c: int) -> bool:
    q = rel0.group.order
    if not 0 <= proof.c0 < q:
        return False
    c1 = (c - proof.c0) % q
    return rel0.check(proof.a0, proof.c0, proof.z0) and rel1.check(proof.a1, c1, proof.z1)


class Transcript:
    """Fiat-Shamir transcript; every part is length-prefixed under a domain label."""

    def __init__(self, label: str):
        self.label = label
        self.parts: list[bytes] = []

    def append(self, tag: str, data: bytes):
        self.parts.append(tag.encode())
        self.parts.append(data)

    def append_elements(self, tag: str, elements: Sequence[GroupElement]):
        self.append(tag, b"".join(e.to_bytes() for e in elements))

    def digest(self) -> bytes:
        return labelled_hash(self.label, *self.parts)


def challenge_scalar(digest: bytes, group: Group) -> int:
    return int.from_bytes(digest, "big") % group.order


# wire helpers: u32 LE count followed by fixed-size items


def write_elements(elements: Sequence[GroupElement]) -> bytes:
    return len(elements).to_bytes(4, "little") + b"".join(e.to_bytes() for e in elements)


def read_elements(reader: Reader, group: Group) -> tuple[GroupElement, ...]:
    count = reader.u32le()
    if count * group.element_bytes > reader.remaining:
        raise DecodeError("Element count exceeds input")
    return tuple(group.decode(reader.take(group.element_bytes)) for _ in range(count))


def write_scalars(scalars: Sequence[int]) -> bytes:
    return len(scalars).to_bytes(4, "little") + b"".join(scalar_to_bytes(k) for k in scalars)


def read_scalars(reader: Reader, group: Group) -> tuple[int, ...]:
    count = reader.u32le()
    if count * SCALAR_BYTES > reader.remaining:
        raise DecodeError("Scalar count exceeds input")
    out = tuple(scalar_from_bytes(reader.take(SCALAR_BYTES)) for _ in range(count))
    if any(k >= group.order for k in out):
        raise DecodeError("Scalar out of range")
    return out


def encode_linear(proof: LinearProof) -> bytes:
    return write_elements(proof.a) + write_scalars(proof.z)


def decode_linear(reader: Reader, group: Group) -> LinearProof:
    return LinearProof(read_elements(reader, group), read_scalars(reader, group))


def encode_or(proof: OrProof) -> bytes:
    return (
        write_elements(proof.a0)
        + write_elements(proof.a1)
        + scalar_to_bytes(proof.c0)
        + write_scalars(proof.z0)
        + write_scalars(proof.z1)
    )


def decode_or(reader: Reader, group: Group) -> OrProof:
    a0 = read_elements(reader, group)
    a1 = read_elements(reader, group)
    c0 = scalar_from_bytes(reader.take(SCALAR_BYTES))
    if c0 >= group.order:
        raise DecodeError("Scalar out of range")
    return OrProof(a0, a1, c0, read_scalars(reader, group), read_scalars(reader, group))
