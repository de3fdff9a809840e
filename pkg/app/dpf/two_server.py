"""
Two-server (2,1)-DPF with O(sqrt L) keys.

The table is an x-by-y matrix. Both keys share the masked row v and agree on
every column bit and seed except at column ix, where the bit flips and the seed
is fresh. Over F_p party B negates its output so the two evaluations add up to
the point function in odd characteristic; under XOR negation is the identity.
"""

from dataclasses import dataclass

import numpy as np

from app.core.errors import InvalidArgument
from app.core.payload import PayloadField
from app.core.prg import SEED_BYTES
from app.core.types import Geometry


@dataclass(frozen=True)
class PointFunction:
    index: int
    message: np.ndarray


@dataclass
class DpfStats:
    """Counts PRG expansions so the hot path can be checked by operation count."""

    expansions: int = 0


@dataclass(frozen=True, eq=False)
class Dpf2Key:
    b: tuple[int, ...]
    s: tuple[bytes, ...]
    v: np.ndarray
    party: int = 0


def dpf2_gen(pf: PointFunction, geometry: Geometry, field: PayloadField, rng) -> tuple[Dpf2Key, Dpf2Key]:
    ix, iy = geometry.split(pf.index)

    b_a = [rng.getrandbits(1) for _ in range(geometry.x)]
    s_a = [rng.randbytes(SEED_BYTES) for _ in range(geometry.x)]
    s_star = rng.randbytes(SEED_BYTES)
    while s_star == s_a[ix]:
        s_star = rng.randbytes(SEED_BYTES)

    b_b = list(b_a)
    b_b[ix] ^= 1
    s_b = list(s_a)
    s_b[ix] = s_star

    target = field.zeros(geometry.y)
    target[iy] = pf.message
    # m*e_iy - G(s_A[ix]) + G(s*), signed by b_A[ix] - b_B[ix]
    diff = field.sub(field.add(target, field.expand(s_star, geometry.y)), field.expand(s_a[ix], geometry.y))
    v = diff if b_a[ix] == 1 else field.neg(diff)

    return (
        Dpf2Key(b=tuple(b_a), s=tuple(s_a), v=v, party=0),
        Dpf2Key(b=tuple(b_b), s=tuple(s_b), v=v, party=1),
    )


def check_key_shape(key: Dpf2Key, geometry: Geometry, field: PayloadField):
    if len(key.b) != geometry.x or len(key.s) != geometry.x:
        raise InvalidArgument("Key columns do not match geometry")
    if key.v.shape != (geometry.y, field.width):
        raise InvalidArgument("Key row vector does not match geometry")


def dpf2_eval(key: Dpf2Key, index: int, geometry: Geometry, field: PayloadField) -> np.ndarray:
    """g[iy] + b[ix]*v[iy], negated for party B."""
    ix, iy = geometry.split(index)
    g = field.expand(key.s[ix], iy + 1)[iy]
    out = field.add(g, field.scale(key.b[ix], key.v[iy]))
    return field.neg(out) if key.party == 1 else out


def dpf2_strips(key: Dpf2Key, geometry: Geometry, field: PayloadField, stats: DpfStats | None = None) -> np.ndarray:
    """All x row-strips G(s[i]) + b[i]*v as an (x, y, width) array, one expansion per strip."""
    strips = []
    for bit, seed in zip(key.b, key.s):
        strips.append(field.add(field.expand(seed, geometry.y), field.scale(bit, key.v)))
    if stats is not None:
        stats.expansions += len(strips)
    return np.stack(strips)


def dpf2_eval_full(
    key: Dpf2Key,
    geometry: Geometry,
    field: PayloadField,
    stats: DpfStats | None = None,
    strips: np.ndarray | None = None,
) -> np.ndarray:
    """Evaluation at every index as an (L, width) array; padding cells are dropped."""
    if strips is None:
        strips = dpf2_strips(key, geometry, field, stats)
    rows = strips.reshape(geometry.x * geometry.y, field.width)[: geometry.rows]
    return field.neg(rows) if key.party == 1 else rows
