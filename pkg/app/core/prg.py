"""AES-128-CTR expansion and the seed-homomorphic PRG."""

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from app.core.errors import InvalidArgument
from app.core.field import P
from app.core.group import GroupElement, PedersenParams

SEED_BYTES = 16
FP_SAMPLE_BYTES = 16
_ZERO_COUNTER = bytes(16)


def prg_expand(seed: bytes, n: int) -> bytes:
    """n bytes of AES-128-CTR keystream under `seed`, counter block starting at zero."""
    if len(seed) != SEED_BYTES:
        raise InvalidArgument(f"PRG seed must be {SEED_BYTES} bytes, got {len(seed)}")
    if n < 0:
        raise InvalidArgument("Negative PRG length")
    if n == 0:
        return b""
    encryptor = Cipher(algorithms.AES(seed), modes.CTR(_ZERO_COUNTER)).encryptor()
    return encryptor.update(bytes(n)) + encryptor.finalize()


def prg_expand_fp(seed: bytes, count: int) -> list[int]:
    """`count` elements of F_p, each from 128 fresh PRG bits reduced mod p."""
    stream = prg_expand(seed, count * FP_SAMPLE_BYTES)
    return [
        int.from_bytes(stream[i:i + FP_SAMPLE_BYTES], "little") % P
        for i in range(0, len(stream), FP_SAMPLE_BYTES)
    ]


def shprg_expand(s: int, y: int, params: PedersenParams) -> list[GroupElement]:
    """(s*P_0, ..., s*P_{y-1}); G(s0 + s1) is the componentwise sum of G(s0) and G(s1)."""
    return [s * g for g in params.generators(y)]
