"""
(s, s-1)-DPF over a prime-order group.

Column bits and seeds are additive shares in Z_q of e_ix and s*·e_ix. Row
expansion is the seed-homomorphic PRG, so the seed shares recombine inside
the expansion: sum_i G(s_i[ix]) = G(s*), which v = m·e_iy - G(s*) cancels.
"""

from dataclasses import dataclass

import numpy as np

from app.core.errors import InvalidArgument
from app.core.payload import GroupField
from app.core.types import Geometry
from app.dpf.two_server import DpfStats, PointFunction


@dataclass(frozen=True, eq=False)
class DpfSKey:
    b: tuple[int, ...]
    s: tuple[int, ...]
    v: np.ndarray
    server_index: int = 0


def _additive_shares(secret: list[int], n: int, q: int, rng) -> list[list[int]]:
    shares = [[rng.randrange(q) for _ in secret] for _ in range(n - 1)]
    last = [(value - sum(col)) % q for value, col in zip(secret, zip(*shares))] if shares else list(secret)
    return shares + [last]


def dpfs_gen(pf: PointFunction, n_servers: int, geometry: Geometry, field: GroupField, rng) -> list[DpfSKey]:
    if n_servers < 2:
        raise InvalidArgument("The multi-server DPF needs at least two servers")
    ix, iy = geometry.split(pf.index)
    q = field.group.order

    s_star = 0
    while s_star == 0:
        s_star = rng.randrange(q)

    unit = [1 if j == ix else 0 for j in range(geometry.x)]
    b_shares = _additive_shares(unit, n_servers, q, rng)
    s_shares = _additive_shares([s_star * u for u in unit], n_servers, q, rng)

    target = field.zeros(geometry.y)
    target[iy] = pf.message
    v = field.sub(target, field.expand(s_star, geometry.y))

    return [
        DpfSKey(b=tuple(b), s=tuple(s), v=v, server_index=i)
        for i, (b, s) in enumerate(zip(b_shares, s_shares))
    ]


def dpfs_eval(key: DpfSKey, index: int, geometry: Geometry, field: GroupField) -> np.ndarray:
    ix, iy = geometry.split(index)
    gens = [field.params.prg_generator(iy * field.width + c) for c in range(field.width)]
    g = np.empty(field.width, dtype=object)
    for c, gen in enumerate(gens):
        g[c] = key.s[ix] * gen
    return field.add(g, field.scale(key.b[ix], key.v[iy]))


def dpfs_eval_full(key: DpfSKey, geometry: Geometry, field: GroupField, stats: DpfStats | None = None) -> np.ndarray:
    strips = [field.add(field.expand(seed, geometry.y), field.scale(bit, key.v)) for bit, seed in zip(key.b, key.s)]
    if stats is not None:
        stats.expansions += len(strips)
    return np.stack(strips).reshape(geometry.x * geometry.y, field.width)[: geometry.rows]
