"""
Prime field F_p with p = 2^64 - 59.

Collision coding works over this field. p = 1 mod 4, so square roots go
through Tonelli-Shanks rather than a single exponentiation.
"""

from dataclasses import dataclass
from typing import Optional

from app.core.errors import InvalidArgument

P = 2**64 - 59
ELEMENT_BYTES = 8


def fp_add(a: int, b: int) -> int:
    return (a + b) % P


def fp_sub(a: int, b: int) -> int:
    return (a - b) % P


def fp_mul(a: int, b: int) -> int:
    return (a * b) % P


def fp_inv(a: int) -> int:
    """Multiplicative inverse; zero has none."""
    a %= P
    if a == 0:
        raise InvalidArgument("Inversion of zero in F_p")
    return pow(a, P - 2, P)


def legendre(a: int, p: int = P) -> int:
    """Euler criterion: 1 for residues, p-1 for non-residues, 0 for zero."""
    return pow(a % p, (p - 1) // 2, p)


def sqrt_mod(a: int, p: int) -> Optional[int]:
    """Square root modulo an odd prime p, or None if a is a non-residue."""
    a %= p
    if a == 0:
        return 0
    if legendre(a, p) != 1:
        return None
    if p % 4 == 3:
        return pow(a, (p + 1) // 4, p)

    # Tonelli-Shanks: p - 1 = q * 2^s with q odd
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1

    z = 2
    while legendre(z, p) != p - 1:
        z += 1

    m = s
    c = pow(z, q, p)
    t = pow(a, q, p)
    r = pow(a, (q + 1) // 2, p)
    while t != 1:
        i, t2 = 0, t
        while t2 != 1:
            t2 = (t2 * t2) % p
            i += 1
        b = pow(c, 1 << (m - i - 1), p)
        m = i
        c = (b * b) % p
        t = (t * c) % p
        r = (r * b) % p
    return r


def fp_sqrt(a: int) -> Optional[int]:
    """Square root in F_p; None signals a non-residue."""
    return sqrt_mod(a, P)


def fp_to_bytes(a: int) -> bytes:
    return (a % P).to_bytes(ELEMENT_BYTES, "little")


def fp_from_bytes(data: bytes) -> int:
    value = int.from_bytes(data, "little")
    if value >= P:
        raise InvalidArgument(f"Field element out of range: {value}")
    return value


@dataclass(frozen=True)
class Fp:
    """Element of F_p with operator arithmetic."""

    value: int

    def __post_init__(self):
        object.__setattr__(self, "value", self.value % P)

    def __add__(self, other: "Fp") -> "Fp":
        return Fp(fp_add(self.value, other.value))

    def __sub__(self, other: "Fp") -> "Fp":
        return Fp(fp_sub(self.value, other.value))

    def __neg__(self) -> "Fp":
        return Fp(-self.value)

    def __mul__(self, other: "Fp") -> "Fp":
        return Fp(fp_mul(self.value, other.value))

    def __truediv__(self, other: "Fp") -> "Fp":
        return Fp(fp_mul(self.value, fp_inv(other.value)))

    def __pow__(self, exponent: int) -> "Fp":
        return Fp(pow(self.value, exponent, P))

    def __int__(self) -> int:
        return self.value

    def inv(self) -> "Fp":
        return Fp(fp_inv(self.value))

    def sqrt(self) -> Optional["Fp"]:
        root = fp_sqrt(self.value)
        return None if root is None else Fp(root)

    def is_zero(self) -> bool:
        return self.value == 0

    def to_bytes(self) -> bytes:
        return fp_to_bytes(self.value)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Fp":
        return cls(fp_from_bytes(data))
