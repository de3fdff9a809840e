import random

import numpy as np
import pytest
from scipy import stats

from app.core.errors import DecodeError, ProtocolViolation
from app.core.payload import PrimeField, XorField
from app.core.types import AuditRole, Phase, RejectReason
from app.dpf.geometry import optimize_geometry
from app.dpf.keys import parse_key, serialize_key
from app.dpf.two_server import Dpf2Key, PointFunction, dpf2_gen
from app.services.audit import (
    CoinFlip,
    SharedCoins,
    audit_decide,
    build_t_vectors,
    coin_flip,
    commit_contribution,
    derive_nonce,
    mask_and_rotate,
    new_contribution,
    run_audit,
)


FIELD = XorField(32)
GEOMETRY = optimize_geometry(1024, 128, 256, 32)


def _keys(rng, index=None, message=None):
    index = rng.randrange(GEOMETRY.rows) if index is None else index
    message = FIELD.random_rows(1, rng)[0] if message is None else message
    return dpf2_gen(PointFunction(index, message), GEOMETRY, FIELD, rng)


def test_honest_request_accepted():
    rng = random.Random(40)
    a, b = _keys(rng)
    assert run_audit(a, b, GEOMETRY, FIELD, 1, rng).accepted


def test_honest_prime_field_request_accepted():
    field = PrimeField(4)
    geometry = optimize_geometry(64, 128, 256, 32)
    rng = random.Random(41)
    a, b = dpf2_gen(PointFunction(9, field.random_rows(1, rng)[0]), geometry, field, rng)
    assert run_audit(a, b, geometry, field, 1, rng).accepted


def test_zero_message_rejected():
    """m = 0 leaves the u vectors equal everywhere."""
    rng = random.Random(42)
    a, b = _keys(rng, message=FIELD.zeros(1)[0])
    verdict = run_audit(a, b, GEOMETRY, FIELD, 1, rng)
    assert not verdict.accepted
    assert verdict.reason == RejectReason.AUDIT


def test_index_tamper_rejected():
    """Column bits differing in two places fail the t phase."""
    rng = random.Random(43)
    a, b = _keys(rng, index=0)
    bits = list(b.b)
    bits[GEOMETRY.x - 1] ^= 1
    tampered = Dpf2Key(tuple(bits), b.s, b.v, party=1)
    assert not run_audit(a, tampered, GEOMETRY, FIELD, 1, rng).accepted


def test_v_corruption_rejected():
    """Different v rows to the two servers are caught by the v digest."""
    rng = random.Random(44)
    a, b = _keys(rng)
    v = b.v.copy()
    v[0] ^= 0xFF
    assert not run_audit(a, Dpf2Key(b.b, b.s, v, party=1), GEOMETRY, FIELD, 1, rng).accepted


def test_equal_bits_with_different_seeds_rejected():
    """Same column bit but fresh seed writes a whole random strip; the u phase sees it."""
    rng = random.Random(45)
    a, b = _keys(rng, index=5)
    ix, _ = GEOMETRY.split(5)
    bits = list(b.b)
    bits[ix] = a.b[ix]
    verdict = run_audit(a, Dpf2Key(tuple(bits), b.s, b.v, party=1), GEOMETRY, FIELD, 1, rng)
    assert not verdict.accepted


def test_full_strip_write_rejected():
    """Differing bit and seed but garbage v: the u vectors differ in many rows."""
    rng = random.Random(46)
    a, b = _keys(rng)
    v = FIELD.random_rows(GEOMETRY.y, rng)
    assert not run_audit(Dpf2Key(a.b, a.s, v), Dpf2Key(b.b, b.s, v, party=1), GEOMETRY, FIELD, 1, rng).accepted


def test_nonce_is_symmetric():
    """Both roles derive the same nonce from the two share hashes."""
    ha, hb = b"\x01" * 32, b"\x02" * 32
    assert derive_nonce(ha, hb, AuditRole.A, 7) == derive_nonce(hb, ha, AuditRole.B, 7)
    assert derive_nonce(ha, hb, AuditRole.A, 7) != derive_nonce(ha, hb, AuditRole.A, 8)


def test_coin_flip_agreement_and_binding():
    """Both servers derive the same coins; a wrong opening is a protocol violation."""
    rng = random.Random(47)
    ca, cb = new_contribution(rng), new_contribution(rng)
    nonce = bytes(16)
    coins_a = coin_flip(ca, commit_contribution(cb), cb, nonce, AuditRole.A)
    coins_b = coin_flip(cb, commit_contribution(ca), ca, nonce, AuditRole.B)
    assert coins_a == coins_b
    assert coins_a.phase(Phase.T, 10) != coins_a.phase(Phase.U, 10)
    with pytest.raises(ProtocolViolation):
        coin_flip(ca, commit_contribution(cb), new_contribution(rng), nonce, AuditRole.A)


def test_mask_and_rotate_preserves_equality_pattern():
    """Equal entries get equal tags; the difference moves to (i - f) mod n."""
    cf = CoinFlip(key_seed=bytes(16), shift=3, n=5)
    left = [bytes([i]) * 4 for i in range(5)]
    right = list(left)
    right[1] = b"zzzz"
    ta, tb = mask_and_rotate(left, cf), mask_and_rotate(right, cf)
    assert [i for i in range(5) if ta[i] != tb[i]] == [(1 - 3) % 5]
    assert all(len(t) == 16 for t in ta)


def test_audit_decide_counts_positions():
    assert audit_decide([b"a", b"b"], [b"a", b"c"]).accepted
    assert not audit_decide([b"a", b"b"], [b"a", b"b"]).accepted
    assert not audit_decide([b"a", b"b"], [b"x", b"y"]).accepted
    assert audit_decide([b"a"], [b"a", b"b"]).detail == "length mismatch"


def _mutate(kind: str, rng):
    a, b = _keys(rng)
    if kind == "zero":
        return dpf2_gen(PointFunction(rng.randrange(GEOMETRY.rows), FIELD.zeros(1)[0]), GEOMETRY, FIELD, rng)
    if kind == "index":
        ix = next(i for i in range(GEOMETRY.x) if a.b[i] != b.b[i])
        j = (ix + 1 + rng.randrange(GEOMETRY.x - 1)) % GEOMETRY.x
        bits = list(b.b)
        bits[j] ^= 1
        return a, Dpf2Key(tuple(bits), b.s, b.v, party=1)
    if kind == "v":
        v = b.v.copy()
        v[rng.randrange(GEOMETRY.y)] = FIELD.random_rows(1, rng)[0]
        return a, Dpf2Key(b.b, b.s, v, party=1)
    data = bytearray(serialize_key(b, FIELD))
    pos = 13 * 8 + rng.randrange((len(data) - 13) * 8)
    data[pos // 8] ^= 1 << (pos % 8)
    return a, parse_key(bytes(data), GEOMETRY, FIELD, party=1)


@pytest.mark.slow
def test_audit_completeness_at_scale():
    """Ten thousand honest requests at L = 1024 are all accepted."""
    rng = random.Random(48)
    for _ in range(10_000):
        a, b = _keys(rng)
        assert run_audit(a, b, GEOMETRY, FIELD, 1, rng).accepted


@pytest.mark.slow
def test_audit_soundness_at_scale():
    """A hundred thousand mutated requests at L = 1024: none accepted."""
    rng = random.Random(49)
    kinds = ["bitflip", "index", "v", "zero"]
    accepted = 0
    for i in range(100_000):
        try:
            a, b = _mutate(kinds[i % 4], rng)
        except DecodeError:
            continue
        accepted += run_audit(a, b, GEOMETRY, FIELD, 1, rng).accepted
    assert accepted == 0


@pytest.mark.slow
def test_auditor_sees_uniform_difference_index():
    """For a fixed index the rotated position of the difference is uniform over Z_n."""
    rng = random.Random(50)
    positions = []
    for _ in range(10_000):
        a, b = _keys(rng, index=300)
        cf = SharedCoins(rng.randbytes(32)).phase(Phase.T, GEOMETRY.x)
        ta, tb = mask_and_rotate(build_t_vectors(a), cf), mask_and_rotate(build_t_vectors(b), cf)
        diff = [i for i in range(GEOMETRY.x) if ta[i] != tb[i]]
        assert len(diff) == 1
        positions.append(diff[0])
    counts = np.bincount(positions, minlength=GEOMETRY.x)
    assert stats.chisquare(counts).pvalue > 0.01
