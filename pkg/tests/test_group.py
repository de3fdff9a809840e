import random

import pytest

from app.core.errors import DecodeError, InvalidArgument
from app.core.group import get_group, get_params
from app.zk.proof import pedersen_commit


@pytest.fixture(params=["schnorr64", "p256"])
def group(request):
    return get_group(request.param)


def test_group_laws(group):
    """Scalar multiplication distributes and the order annihilates."""
    rng = random.Random(10)
    g = group.hash_to_element("test/g")
    a, b = group.random_scalar(rng), group.random_scalar(rng)
    assert (a + b) * g == a * g + b * g
    assert group.order * g == group.identity
    assert (g - g).is_identity()


def test_encode_decode_canonical(group):
    """Encodings have fixed length and decode back to the same element."""
    rng = random.Random(11)
    g = group.hash_to_element("test/h")
    for _ in range(10):
        e = group.random_scalar(rng) * g
        data = group.encode(e)
        assert len(data) == group.element_bytes
        assert group.decode(data) == e
    assert group.decode(group.encode(group.identity)) == group.identity


def test_identity_encoding():
    """P-256 identity is all-zero bytes; the test-group identity is the residue 1."""
    p256 = get_group("p256")
    assert p256.encode(p256.identity) == bytes(33)
    schnorr = get_group("schnorr64")
    assert int.from_bytes(schnorr.encode(schnorr.identity), "big") == 1


def test_decode_rejects_non_members():
    """Values outside the residue subgroup are refused."""
    schnorr = get_group("schnorr64")
    non_residue = schnorr.modulus - 1
    with pytest.raises(DecodeError):
        schnorr.decode(non_residue.to_bytes(schnorr.element_bytes, "big"))
    with pytest.raises(DecodeError):
        schnorr.decode(b"\x01")


def test_message_embedding_roundtrip(group):
    """Chunks up to embed_bytes survive embedding, including trailing zeros."""
    rng = random.Random(12)
    for n in (0, 1, group.embed_bytes):
        chunk = rng.randbytes(n - 1) + b"\x00" if n else b""
        e = group.encode_message(chunk)
        assert not e.is_identity()
        assert group.decode_message(e) == chunk


def test_message_embedding_capacity(group):
    with pytest.raises(InvalidArgument):
        group.encode_message(bytes(group.embed_bytes + 1))


def test_schnorr_group_is_deterministic():
    """The safe-prime search is seeded, so every process derives the same group."""
    schnorr = get_group("schnorr64")
    assert schnorr.modulus == 2 * schnorr.order + 1
    assert schnorr.modulus.bit_length() == 64
    assert schnorr.embed_bytes == 6


def test_pedersen_generators_distinct():
    """P, Q and the PRG generators are pairwise distinct and stable."""
    params = get_params("schnorr64")
    gens = params.generators(8)
    assert len({params.P, params.Q, *gens}) == 10
    assert params.prg_generator(3) == gens[3]
    assert params.commit(2, 5) == 2 * params.P + 5 * params.Q


def test_pedersen_commitments_add():
    """Commitments are additively homomorphic in both message and randomness."""
    params = get_params("schnorr64")
    rng = random.Random(12)
    q = params.group.order
    m1, r1, m2, r2 = (params.group.random_scalar(rng) for _ in range(4))
    total = pedersen_commit(params, m1, r1) + pedersen_commit(params, m2, r2)
    assert total == pedersen_commit(params, (m1 + m2) % q, (r1 + r2) % q)
    assert pedersen_commit(params, m1, r1) != pedersen_commit(params, m1, (r1 + 1) % q)
    assert pedersen_commit(params, 0, 0).is_identity()
