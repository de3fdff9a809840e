import random

import pytest

from app.core.errors import InvalidArgument
from app.core.field import P, Fp, fp_add, fp_from_bytes, fp_inv, fp_mul, fp_sqrt, fp_sub, fp_to_bytes, sqrt_mod


def test_field_arithmetic_wraps():
    """Addition and subtraction reduce mod p."""
    assert fp_add(P - 1, 2) == 1
    assert fp_sub(0, 1) == P - 1
    assert fp_mul(P - 1, P - 1) == 1


def test_inverse():
    """a * a^-1 = 1 for random nonzero a; zero has no inverse."""
    rng = random.Random(1)
    for _ in range(50):
        a = rng.randrange(1, P)
        assert fp_mul(a, fp_inv(a)) == 1
    with pytest.raises(InvalidArgument):
        fp_inv(0)


def test_sqrt_of_squares():
    """Every square has a root that squares back; p = 1 mod 4 exercises Tonelli-Shanks."""
    assert P % 4 == 1
    rng = random.Random(2)
    for _ in range(200):
        a = rng.randrange(P)
        root = fp_sqrt(fp_mul(a, a))
        assert root is not None
        assert fp_mul(root, root) == fp_mul(a, a)


def test_sqrt_non_residue_returns_none():
    """Half the nonzero elements are non-residues."""
    rng = random.Random(3)
    misses = sum(fp_sqrt(rng.randrange(1, P)) is None for _ in range(400))
    assert 120 < misses < 280


def test_sqrt_mod_small_primes():
    """The generic routine works for both p = 3 mod 4 and p = 1 mod 4."""
    for p in (7, 13, 17, 41, 97):
        for a in range(p):
            r = sqrt_mod(a, p)
            if r is not None:
                assert (r * r) % p == a


def test_fp_value_class():
    """Operator arithmetic agrees with the integer helpers."""
    a, b = Fp(12345), Fp(P - 7)
    assert int(a + b) == fp_add(12345, P - 7)
    assert int(a * b) == fp_mul(12345, P - 7)
    assert int((a / b) * b) == 12345
    assert (a - a).is_zero()
    assert Fp.from_bytes(a.to_bytes()) == a


def test_fp_bytes_are_canonical():
    """Encodings at or above p are refused."""
    assert fp_to_bytes(1) == b"\x01" + bytes(7)
    with pytest.raises(InvalidArgument):
        fp_from_bytes(P.to_bytes(8, "little"))
