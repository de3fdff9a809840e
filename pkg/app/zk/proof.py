"""
Write-validity proofs for the multi-server DPF.

The client commits to every server's column-bit and seed shares (B_i, S_i), to
each server's blinded PRG row output G_i[k] = sigma_i * P_k + r * Q with
sigma_i = sum of server i's seed shares, and to the row bits D_k of e_{iy}. It
then proves, under one Fiat-Shamir challenge:

  bit      every B_sum[j] commits to 0 or 1
  sum      sum_j B_sum[j] commits to 1
  link     S_sum[j] commits to 0, or B_sum[j] commits to 1
  rowbit   every D_k commits to 0 or 1
  rowsum   sum_k D_k commits to 1
  rowlink  D_k commits to 1, or the row writes nothing: sum S = s* P + rho Q,
           sum_i G_i[k] = s* P_k + R Q and G_sum[k] = sum_i G_i[k] + v[k] = R Q

Each server checks its own openings against its key share, recomputes the
homomorphic sums and verifies every sub-proof.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from app.core.codec import Reader, sha256
from app.core.errors import DecodeError, InvalidArgument
from app.core.group import GroupElement, PedersenParams
from app.core.payload import GroupField
from app.core.types import Geometry, RejectReason, Verdict
from app.dpf.multi_server import DpfSKey
from app.zk.sigma import (
    LinearProof,
    LinearProver,
    LinearRelation,
    OrProof,
    OrProver,
    Transcript,
    challenge_scalar,
    decode_linear,
    decode_or,
    dlog_relation,
    encode_linear,
    encode_or,
    linear_verify,
    or_verify,
    read_elements,
    read_scalars,
    write_elements,
    write_scalars,
)

TRANSCRIPT_LABEL = "riposte/zk/write"

SECTION_HEADER = 0x48
SECTION_B = 0x42
SECTION_S = 0x53
SECTION_G = 0x47
SECTION_D = 0x44
SECTION_V = 0x56
SECTION_PROOF = 0x50


class ZkReason(str, Enum):
    OPENING_MISMATCH = "opening_mismatch"
    BIT_PROOF_FAILED = "bit_proof_failed"
    SUM_PROOF_FAILED = "sum_proof_failed"
    LINK_PROOF_FAILED = "link_proof_failed"
    ROW_PROOF_FAILED = "row_proof_failed"
    CHALLENGE_MISMATCH = "challenge_mismatch"
    MALFORMED = "malformed"


def pedersen_commit(params: PedersenParams, m: int, r: int) -> GroupElement:
    return params.commit(m, r)


@dataclass(frozen=True)
class WriteCommitments:
    """Public commitments; G[i] is flattened row-major (k * chunks + c)."""

    B: tuple[tuple[GroupElement, ...], ...]
    S: tuple[tuple[GroupElement, ...], ...]
    G: tuple[tuple[GroupElement, ...], ...]
    D: tuple[GroupElement, ...]
    v_digest: bytes


@dataclass(frozen=True)
class ServerOpening:
    rb: tuple[int, ...]
    rs: tuple[int, ...]
    rg: tuple[int, ...]


@dataclass(frozen=True)
class WriteValidityProof:
    bit: tuple[OrProof, ...]
    sum: LinearProof
    link: tuple[OrProof, ...]
    rowbit: tuple[OrProof, ...]
    rowsum: LinearProof
    rowlink: tuple[OrProof, ...]
    challenge: bytes


def v_rows_digest(v: np.ndarray, field: GroupField) -> bytes:
    return sha256(b"riposte/zk/v", field.rows_to_bytes(v))


def _sum(group, elements) -> GroupElement:
    acc = group.identity
    for e in elements:
        acc = acc + e
    return acc


class WriteStatement:
    """Homomorphic sums of the public commitments and the relations built on them."""

    def __init__(self, params: PedersenParams, commitments: WriteCommitments, v: np.ndarray, geometry: Geometry, chunks: int):
        self.params = params
        self.group = params.group
        self.commitments = commitments
        self.geometry = geometry
        self.chunks = chunks
        g = self.group
        self.B_sum = [_sum(g, col) for col in zip(*commitments.B)]
        self.S_sum = [_sum(g, col) for col in zip(*commitments.S)]
        self.G_plain = [_sum(g, col) for col in zip(*commitments.G)]
        flat_v = list(np.asarray(v, dtype=object).ravel())
        self.G_sum = [gp + vk for gp, vk in zip(self.G_plain, flat_v)]
        self.B_tot = _sum(g, self.B_sum)
        self.S_tot = _sum(g, self.S_sum)
        self.D_tot = _sum(g, commitments.D)

    def _q(self, target: GroupElement) -> LinearRelation:
        return dlog_relation(self.group, self.params.Q, target)

    def bit(self, target: GroupElement) -> tuple[LinearRelation, LinearRelation]:
        return self._q(target), self._q(target - self.params.P)

    def column_bit(self, j: int):
        return self.bit(self.B_sum[j])

    def column_sum(self) -> LinearRelation:
        return self._q(self.B_tot - self.params.P)

    def link(self, j: int):
        return self._q(self.S_sum[j]), self._q(self.B_sum[j] - self.params.P)

    def row_bit(self, k: int):
        return self.bit(self.commitments.D[k])

    def row_sum(self) -> LinearRelation:
        return self._q(self.D_tot - self.params.P)

    def row_link(self, k: int):
        """Branch 0 witnesses: (s*, rho*, R_k0, ..., R_k(c-1)); branch 1: delta_k."""
        P, Q = self.params.P, self.params.Q
        targets = [self.S_tot]
        terms = [((0, P), (1, Q))]
        for c in range(self.chunks):
            idx = k * self.chunks + c
            gen = self.params.prg_generator(idx)
            targets.append(self.G_plain[idx])
            terms.append(((0, gen), (2 + c, Q)))
            targets.append(self.G_sum[idx])
            terms.append(((2 + c, Q),))
        rel0 = LinearRelation(self.group, tuple(targets), tuple(terms), 2 + self.chunks)
        return rel0, self._q(self.commitments.D[k] - P)


def _transcript(statement: WriteStatement, epoch_id: int, n_servers: int) -> Transcript:
    geo = statement.geometry
    t = Transcript(TRANSCRIPT_LABEL)
    t.append("epoch", epoch_id.to_bytes(8, "big"))
    t.append(
        "geometry",
        b"".join(v.to_bytes(4, "big") for v in (geo.rows, geo.x, geo.y, statement.chunks, n_servers)),
    )
    t.append("group", statement.group.name.encode())
    com = statement.commitments
    for i in range(n_servers):
        t.append_elements(f"B{i}", com.B[i])
        t.append_elements(f"S{i}", com.S[i])
        t.append_elements(f"G{i}", com.G[i])
    t.append_elements("D", com.D)
    t.append("v", com.v_digest)
    return t


def _append_or(t: Transcript, tag: str, a0, a1):
    t.append_elements(f"{tag}/0", a0)
    t.append_elements(f"{tag}/1", a1)


def prove_write_valid(
    keys: Sequence[DpfSKey],
    index: int,
    message: np.ndarray,
    geometry: Geometry,
    field: GroupField,
    epoch_id: int,
    rng,
) -> tuple[WriteCommitments, list[ServerOpening], WriteValidityProof]:
    params = field.params
    group = params.group
    q = group.order
    chunks = field.width
    if all(e.is_identity() for e in message):
        raise InvalidArgument("The identity message carries nothing to prove")
    ix, iy = geometry.split(index)
    n = len(keys)
    x, cells = geometry.x, geometry.y * chunks

    rb = [[group.random_scalar(rng) for _ in range(x)] for _ in range(n)]
    rs = [[group.random_scalar(rng) for _ in range(x)] for _ in range(n)]
    rg = [[group.random_scalar(rng) for _ in range(cells)] for _ in range(n)]
    delta = [group.random_scalar(rng) for _ in range(geometry.y)]
    row_bits = [1 if k == iy else 0 for k in range(geometry.y)]
    gens = [params.prg_generator(i) for i in range(cells)]

    B, S, G = [], [], []
    for i, key in enumerate(keys):
        B.append(tuple(params.commit(key.b[j], rb[i][j]) for j in range(x)))
        S.append(tuple(params.commit(key.s[j], rs[i][j]) for j in range(x)))
        sigma_i = sum(key.s) % q
        G.append(tuple(sigma_i * gens[idx] + rg[i][idx] * params.Q for idx in range(cells)))
    D = tuple(params.commit(d, r) for d, r in zip(row_bits, delta))
    commitments = WriteCommitments(tuple(B), tuple(S), tuple(G), D, v_rows_digest(keys[0].v, field))
    openings = [ServerOpening(tuple(rb[i]), tuple(rs[i]), tuple(rg[i])) for i in range(n)]

    statement = WriteStatement(params, commitments, keys[0].v, geometry, chunks)
    b_sum = [sum(key.b[j] for key in keys) % q for j in range(x)]
    beta = [sum(rb[i][j] for i in range(n)) % q for j in range(x)]
    rho = [sum(rs[i][j] for i in range(n)) % q for j in range(x)]
    s_star = sum(sum(key.s) for key in keys) % q
    rho_star = sum(rho) % q
    big_r = [sum(rg[i][idx] for i in range(n)) % q for idx in range(cells)]

    bit = [OrProver(*statement.column_bit(j), b_sum[j], [beta[j]], rng) for j in range(x)]
    total = LinearProver(statement.column_sum(), [sum(beta) % q], rng)
    link = [
        OrProver(*statement.link(j), 1 if j == ix else 0, [beta[j] if j == ix else rho[j]], rng)
        for j in range(x)
    ]
    rowbit = [OrProver(*statement.row_bit(k), row_bits[k], [delta[k]], rng) for k in range(geometry.y)]
    rowsum = LinearProver(statement.row_sum(), [sum(delta) % q], rng)
    rowlink = []
    for k in range(geometry.y):
        if k == iy:
            rowlink.append(OrProver(*statement.row_link(k), 1, [delta[k]], rng))
        else:
            witness = [s_star, rho_star] + big_r[k * chunks:(k + 1) * chunks]
            rowlink.append(OrProver(*statement.row_link(k), 0, witness, rng))

    t = _transcript(statement, epoch_id, n)
    for j, p in enumerate(bit):
        _append_or(t, f"bit{j}", *p.a)
    t.append_elements("sum", total.announcements)
    for j, p in enumerate(link):
        _append_or(t, f"link{j}", *p.a)
    for k, p in enumerate(rowbit):
        _append_or(t, f"rowbit{k}", *p.a)
    t.append_elements("rowsum", rowsum.announcements)
    for k, p in enumerate(rowlink):
        _append_or(t, f"rowlink{k}", *p.a)
    digest = t.digest()
    c = challenge_scalar(digest, group)

    proof = WriteValidityProof(
        bit=tuple(p.finish(c) for p in bit),
        sum=total.finish(c),
        link=tuple(p.finish(c) for p in link),
        rowbit=tuple(p.finish(c) for p in rowbit),
        rowsum=rowsum.finish(c),
        rowlink=tuple(p.finish(c) for p in rowlink),
        challenge=digest,
    )
    return commitments, openings, proof


def _reject(reason: ZkReason) -> Verdict:
    return Verdict.reject(RejectReason.PROOF, reason.value)


def _shapes_ok(commitments, opening, proof, geometry, chunks, n_servers) -> bool:
    x, y, cells = geometry.x, geometry.y, geometry.y * chunks
    if not (len(commitments.B) == len(commitments.S) == len(commitments.G) == n_servers):
        return False
    if any(len(col) != x for col in commitments.B + commitments.S):
        return False
    if any(len(g) != cells for g in commitments.G) or len(commitments.D) != y:
        return False
    if (len(opening.rb), len(opening.rs), len(opening.rg)) != (x, x, cells):
        return False
    return (len(proof.bit), len(proof.link), len(proof.rowbit), len(proof.rowlink)) == (x, x, y, y)


def verify_write_share(
    server_index: int,
    key: DpfSKey,
    commitments: WriteCommitments,
    opening: ServerOpening,
    proof: WriteValidityProof,
    geometry: Geometry,
    field: GroupField,
    epoch_id: int,
    n_servers: int,
) -> Verdict:
    """Accept iff the openings match this key share and every sub-proof verifies."""
    params = field.params
    q = params.group.order
    chunks = field.width
    if not 0 <= server_index < n_servers:
        return _reject(ZkReason.MALFORMED)
    if not _shapes_ok(commitments, opening, proof, geometry, chunks, n_servers):
        return _reject(ZkReason.MALFORMED)
    if len(key.b) != geometry.x or key.v.shape != (geometry.y, chunks):
        return _reject(ZkReason.MALFORMED)

    B, S, G = commitments.B[server_index], commitments.S[server_index], commitments.G[server_index]
    if any(B[j] != params.commit(key.b[j], opening.rb[j]) for j in range(geometry.x)):
        return _reject(ZkReason.OPENING_MISMATCH)
    if any(S[j] != params.commit(key.s[j], opening.rs[j]) for j in range(geometry.x)):
        return _reject(ZkReason.OPENING_MISMATCH)
    sigma_i = sum(key.s) % q
    if any(
        G[idx] != sigma_i * params.prg_generator(idx) + opening.rg[idx] * params.Q
        for idx in range(len(G))
    ):
        return _reject(ZkReason.OPENING_MISMATCH)
    if v_rows_digest(key.v, field) != commitments.v_digest:
        return _reject(ZkReason.OPENING_MISMATCH)

    statement = WriteStatement(params, commitments, key.v, geometry, chunks)
    c = challenge_scalar(proof.challenge, params.group)

    if not all(or_verify(*statement.column_bit(j), p, c) for j, p in enumerate(proof.bit)):
        return _reject(ZkReason.BIT_PROOF_FAILED)
    if not linear_verify(statement.column_sum(), proof.sum, c):
        return _reject(ZkReason.SUM_PROOF_FAILED)
    if not all(or_verify(*statement.link(j), p, c) for j, p in enumerate(proof.link)):
        return _reject(ZkReason.LINK_PROOF_FAILED)
    if not all(or_verify(*statement.row_bit(k), p, c) for k, p in enumerate(proof.rowbit)):
        return _reject(ZkReason.ROW_PROOF_FAILED)
    if not linear_verify(statement.row_sum(), proof.rowsum, c):
        return _reject(ZkReason.ROW_PROOF_FAILED)
    if not all(or_verify(*statement.row_link(k), p, c) for k, p in enumerate(proof.rowlink)):
        return _reject(ZkReason.ROW_PROOF_FAILED)

    t = _transcript(statement, epoch_id, n_servers)
    for j, p in enumerate(proof.bit):
        _append_or(t, f"bit{j}", p.a0, p.a1)
    t.append_elements("sum", proof.sum.a)
    for j, p in enumerate(proof.link):
        _append_or(t, f"link{j}", p.a0, p.a1)
    for k, p in enumerate(proof.rowbit):
        _append_or(t, f"rowbit{k}", p.a0, p.a1)
    t.append_elements("rowsum", proof.rowsum.a)
    for k, p in enumerate(proof.rowlink):
        _append_or(t, f"rowlink{k}", p.a0, p.a1)
    if t.digest() != proof.challenge:
        return _reject(ZkReason.CHALLENGE_MISMATCH)
    return Verdict.accept()


# serialization: tagged sections, u8 tag + u32 LE length + body


def _section(tag: int, body: bytes) -> bytes:
    return bytes([tag]) + len(body).to_bytes(4, "little") + body


def _read_section(reader: Reader, tag: int) -> Reader:
    got = reader.u8()
    if got != tag:
        raise DecodeError(f"Expected section 0x{tag:02x}, got 0x{got:02x}")
    return Reader(reader.lp())


def encode_proof(proof: WriteValidityProof) -> bytes:
    parts = [
        write_ors(proof.bit),
        encode_linear(proof.sum),
        write_ors(proof.link),
        write_ors(proof.rowbit),
        encode_linear(proof.rowsum),
        write_ors(proof.rowlink),
        proof.challenge,
    ]
    return b"".join(parts)


def write_ors(proofs: Sequence[OrProof]) -> bytes:
    return len(proofs).to_bytes(4, "little") + b"".join(encode_or(p) for p in proofs)


def read_ors(reader: Reader, group) -> tuple[OrProof, ...]:
    count = reader.u32le()
    if count > reader.remaining:
        raise DecodeError("OR-proof count exceeds input")
    return tuple(decode_or(reader, group) for _ in range(count))


def decode_proof(data: bytes, group) -> WriteValidityProof:
    reader = Reader(data)
    proof = WriteValidityProof(
        bit=read_ors(reader, group),
        sum=decode_linear(reader, group),
        link=read_ors(reader, group),
        rowbit=read_ors(reader, group),
        rowsum=decode_linear(reader, group),
        rowlink=read_ors(reader, group),
        challenge=reader.take(32),
    )
    reader.finish()
    return proof


def encode_public(commitments: WriteCommitments, proof: WriteValidityProof) -> bytes:
    """Public bundle broadcast to every server: commitments plus proof."""
    n = len(commitments.B)
    header = n.to_bytes(4, "little")
    return b"".join(
        [
            _section(SECTION_HEADER, header),
            _section(SECTION_B, b"".join(write_elements(col) for col in commitments.B)),
            _section(SECTION_S, b"".join(write_elements(col) for col in commitments.S)),
            _section(SECTION_G, b"".join(write_elements(col) for col in commitments.G)),
            _section(SECTION_D, write_elements(commitments.D)),
            _section(SECTION_V, commitments.v_digest),
            _section(SECTION_PROOF, encode_proof(proof)),
        ]
    )


def decode_public(data: bytes, group) -> tuple[WriteCommitments, WriteValidityProof]:
    reader = Reader(data)
    head = _read_section(reader, SECTION_HEADER)
    n = head.u32le()
    head.finish()

    def per_server(tag: int):
        section = _read_section(reader, tag)
        if n > section.remaining:
            raise DecodeError("Server count exceeds input")
        out = tuple(read_elements(section, group) for _ in range(n))
        section.finish()
        return out

    B = per_server(SECTION_B)
    S = per_server(SECTION_S)
    G = per_server(SECTION_G)
    d_section = _read_section(reader, SECTION_D)
    D = read_elements(d_section, group)
    d_section.finish()
    v_section = _read_section(reader, SECTION_V)
    v_digest = v_section.take(32)
    v_section.finish()
    p_section = _read_section(reader, SECTION_PROOF)
    proof = decode_proof(p_section.take(p_section.remaining), group)
    reader.finish()
    return WriteCommitments(B, S, G, D, v_digest), proof


def encode_opening(opening: ServerOpening) -> bytes:
    return write_scalars(opening.rb) + write_scalars(opening.rs) + write_scalars(opening.rg)


def decode_opening(data: bytes, group) -> ServerOpening:
    reader = Reader(data)
    opening = ServerOpening(read_scalars(reader, group), read_scalars(reader, group), read_scalars(reader, group))
    reader.finish()
    return opening
