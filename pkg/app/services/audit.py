"""
Three-party write audit for the two-server DPF.

Each server turns its key into two test vectors: t (column bit || seed) and u
(the sum of its evaluated row-strips). For a well-formed pair both vectors
differ between the servers at exactly one index. The servers mask every entry
with a one-time Poly1305 key, rotate by a jointly flipped shift and hand the
tags to the auditor, who only counts unequal positions.
"""

from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.poly1305 import Poly1305

from app.core.codec import sha256
from app.core.errors import ProtocolViolation
from app.core.payload import PayloadField
from app.core.prg import prg_expand
from app.core.types import AuditRole, Geometry, Phase, RejectReason, Verdict
from app.dpf.keys import serialize_key
from app.dpf.two_server import Dpf2Key, DpfStats, dpf2_strips

NONCE_BYTES = 16
TAG_BYTES = 16
CONTRIBUTION_BYTES = 32
POLY1305_KEY_BYTES = 32


def share_hash(share: bytes) -> bytes:
    return sha256(share)


def v_digest(key: Dpf2Key, field: PayloadField) -> bytes:
    return sha256(b"riposte/v", field.rows_to_bytes(key.v))


def derive_nonce(own_share_hash: bytes, peer_share_hash: bytes, role: AuditRole, epoch_id: int) -> bytes:
    """First 16 bytes of H(epoch || hash(A share) || hash(B share)); same on both servers."""
    if role == AuditRole.A:
        hash_a, hash_b = own_share_hash, peer_share_hash
    else:
        hash_a, hash_b = peer_share_hash, own_share_hash
    return sha256(epoch_id.to_bytes(8, "big"), hash_a, hash_b)[:NONCE_BYTES]


@dataclass(frozen=True)
class CoinFlip:
    """Per-phase shared coins: Poly1305 key seed and rotation shift f in Z_n."""

    key_seed: bytes
    shift: int
    n: int


@dataclass(frozen=True)
class SharedCoins:
    kappa: bytes

    def phase(self, phase: Phase, n: int) -> CoinFlip:
        label = phase.value.encode()
        key_seed = sha256(self.kappa, label, b"key")[:16]
        shift = int.from_bytes(sha256(self.kappa, label, b"shift")[:8], "big") % n
        return CoinFlip(key_seed=key_seed, shift=shift, n=n)


def new_contribution(rng) -> bytes:
    return rng.randbytes(CONTRIBUTION_BYTES)


def commit_contribution(contribution: bytes) -> bytes:
    return sha256(b"riposte/coinflip", contribution)


def coin_flip(
    own_contribution: bytes,
    peer_commitment: bytes,
    peer_contribution: bytes,
    nonce: bytes,
    role: AuditRole,
) -> SharedCoins:
    """kappa = H(contrib_A || contrib_B || nonce) after checking the peer's opening."""
    if commit_contribution(peer_contribution) != peer_commitment:
        raise ProtocolViolation("Coin-flip opening does not match commitment")
    if role == AuditRole.A:
        contrib_a, contrib_b = own_contribution, peer_contribution
    else:
        contrib_a, contrib_b = peer_contribution, own_contribution
    return SharedCoins(kappa=sha256(contrib_a, contrib_b, nonce))


def build_t_vectors(key: Dpf2Key) -> list[bytes]:
    return [bytes([bit]) + seed for bit, seed in zip(key.b, key.s)]


def build_u_vectors(
    key: Dpf2Key,
    geometry: Geometry,
    field: PayloadField,
    strips: np.ndarray | None = None,
    stats: DpfStats | None = None,
) -> list[bytes]:
    """Sum over columns of G(s[i]) + b[i]*v, one serialized row per entry.

    The difference between the two servers' vectors is exactly the strip the pair
    writes at column ix, so this phase checks the real write.
    """
    if strips is None:
        strips = dpf2_strips(key, geometry, field, stats)
    total = field.sum_rows(strips)
    return [field.rows_to_bytes(row.reshape(1, field.width)) for row in total]


def mask_and_rotate(vector: list[bytes], cf: CoinFlip) -> list[bytes]:
    """Tag entry i with Poly1305 under key i, then rotate left by f."""
    keys = prg_expand(cf.key_seed, POLY1305_KEY_BYTES * len(vector))
    tags = [
        Poly1305.generate_tag(keys[i * POLY1305_KEY_BYTES:(i + 1) * POLY1305_KEY_BYTES], entry)
        for i, entry in enumerate(vector)
    ]
    f = cf.shift % len(tags) if tags else 0
    return tags[f:] + tags[:f]


def audit_decide(masked_a: list[bytes], masked_b: list[bytes]) -> Verdict:
    """Accept iff the two tag vectors differ at exactly one position."""
    if len(masked_a) != len(masked_b):
        return Verdict.reject(RejectReason.AUDIT, "length mismatch")
    unequal = sum(1 for a, b in zip(masked_a, masked_b) if a != b)
    if unequal != 1:
        return Verdict.reject(RejectReason.AUDIT, f"{unequal} unequal positions")
    return Verdict.accept()


@dataclass
class AuditSide:
    """One server's private audit inputs for a request."""

    key: Dpf2Key
    share_hash: bytes
    t: list[bytes]
    u: list[bytes]
    v_digest: bytes
    strips: np.ndarray

    @classmethod
    def prepare(cls, key: Dpf2Key, share: bytes, geometry: Geometry, field: PayloadField,
                stats: DpfStats | None = None) -> "AuditSide":
        strips = dpf2_strips(key, geometry, field, stats)
        return cls(
            key=key,
            share_hash=share_hash(share),
            t=build_t_vectors(key),
            u=build_u_vectors(key, geometry, field, strips=strips),
            v_digest=v_digest(key, field),
            strips=strips,
        )

    def masked(self, coins: SharedCoins, phase: Phase) -> list[bytes]:
        vector = self.t if phase == Phase.T else self.u
        return mask_and_rotate(vector, coins.phase(phase, len(vector)))


def audit_sides(side_a: AuditSide, side_b: AuditSide, epoch_id: int, rng) -> Verdict:
    """Run the audit on two prepared sides in-process (both servers plus the auditor)."""
    nonce_a = derive_nonce(side_a.share_hash, side_b.share_hash, AuditRole.A, epoch_id)
    nonce_b = derive_nonce(side_b.share_hash, side_a.share_hash, AuditRole.B, epoch_id)
    if nonce_a != nonce_b:
        return Verdict.reject(RejectReason.AUDIT, "nonce mismatch")
    if side_a.v_digest != side_b.v_digest:
        return Verdict.reject(RejectReason.AUDIT, "v mismatch")

    contrib_a, contrib_b = new_contribution(rng), new_contribution(rng)
    coins_a = coin_flip(contrib_a, commit_contribution(contrib_b), contrib_b, nonce_a, AuditRole.A)
    coins_b = coin_flip(contrib_b, commit_contribution(contrib_a), contrib_a, nonce_b, AuditRole.B)

    for phase in (Phase.T, Phase.U):
        verdict = audit_decide(side_a.masked(coins_a, phase), side_b.masked(coins_b, phase))
        if not verdict.accepted:
            return verdict
    return Verdict.accept()


def run_audit(
    key_a: Dpf2Key,
    key_b: Dpf2Key,
    geometry: Geometry,
    field: PayloadField,
    epoch_id: int,
    rng,
) -> Verdict:
    """Audit a key pair end to end; Accept iff both AlmostEqual instances accept."""
    side_a = AuditSide.prepare(key_a, serialize_key(key_a, field), geometry, field)
    side_b = AuditSide.prepare(key_b, serialize_key(key_b, field), geometry, field)
    return audit_sides(side_a, side_b, epoch_id, rng)
