import random

import pytest

from app.core.errors import InvalidArgument
from app.core.field import P
from app.core.group import get_params
from app.core.prg import SEED_BYTES, prg_expand, prg_expand_fp, shprg_expand


def test_prg_is_deterministic_and_prefix_stable():
    """Same seed gives the same stream; shorter outputs are prefixes."""
    seed = bytes(range(16))
    long = prg_expand(seed, 1000)
    assert len(long) == 1000
    assert prg_expand(seed, 1000) == long
    assert prg_expand(seed, 37) == long[:37]
    assert prg_expand(seed, 0) == b""


def test_prg_seed_length():
    with pytest.raises(InvalidArgument):
        prg_expand(b"short", 16)


def test_prg_aes_ctr_known_answer():
    """All-zero key, zero counter: first block is AES_0(0^128)."""
    assert prg_expand(bytes(SEED_BYTES), 16).hex() == "66e94bd4ef8a2c3b884cfa59ca342b2e"


def test_prg_expand_fp_in_range():
    out = prg_expand_fp(b"\x07" * 16, 64)
    assert len(out) == 64
    assert all(0 <= v < P for v in out)


def test_seed_homomorphic_prg():
    """G(s0 + s1) equals G(s0) + G(s1) componentwise."""
    params = get_params("schnorr64")
    q = params.group.order
    rng = random.Random(4)
    s0, s1 = rng.randrange(q), rng.randrange(q)
    combined = shprg_expand((s0 + s1) % q, 6, params)
    parts = [a + b for a, b in zip(shprg_expand(s0, 6, params), shprg_expand(s1, 6, params))]
    assert combined == parts
