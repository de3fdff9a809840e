"""
Collision sizing and two-way collision recovery over F_p.

Sizing follows the balls-in-bins analysis: a write survives if no other write
lands in its row (or, with recovery coding, at most one other does). Recovery
coding writes (m, m^2) per chunk, so a cell holding two messages can be split
by a square root: 2*S2 - S1^2 = (mA - mB)^2.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from app.core.codec import sha256
from app.core.errors import InvalidArgument
from app.core.field import P, fp_inv, fp_sqrt
from app.core.types import CellStatus

CHUNK_BYTES = 7
MAX_RECOVERY_CHUNKS = 32
_INV2 = fp_inv(2)


class SizingModel(str, Enum):
    APPROX = "approx"
    EXACT = "exact"


class SizingQuery(BaseModel):
    m: int = Field(ge=1)
    malicious: int = Field(default=0, ge=0)
    target: float
    recovery: bool = False
    model: SizingModel = SizingModel.APPROX


def expected_success_rate(m: int, n: int, recovery: bool) -> float:
    """Truncated-series approximation of the fraction of writes that survive."""
    if m < 1 or n < 1:
        raise InvalidArgument(f"Need m >= 1 and n >= 1, got m={m}, n={n}")
    r = m / n
    if recovery:
        return 1 - r * r / 2 + r**3 / 3
    return 1 - r + r * r / 2


def exact_success_rate(m: int, n: int, recovery: bool) -> float:
    """Exact balls-in-bins expectation of the surviving fraction."""
    if m < 1 or n < 1:
        raise InvalidArgument(f"Need m >= 1 and n >= 1, got m={m}, n={n}")
    miss = 1 - 1 / n
    rate = miss ** (m - 1)
    if recovery and m >= 2:
        rate += (m - 1) / n * miss ** (m - 2)
    return rate


def required_table_size(query: SizingQuery) -> int:
    """Smallest n with success_rate(m, n - malicious) >= target.

    The approximation is only monotone for m/n <= 1, so that model searches
    n - malicious >= m.
    """
    if not 0 < query.target < 1:
        raise InvalidArgument(f"Target success rate must lie in (0, 1), got {query.target}")

    if query.model == SizingModel.APPROX:
        rate, lo = expected_success_rate, query.m
    else:
        rate, lo = exact_success_rate, 1

    def ok(n: int) -> bool:
        return rate(query.m, n, query.recovery) >= query.target

    hi = lo
    while not ok(hi):
        hi *= 2
        if hi > 1 << 62:
            raise InvalidArgument(f"Target {query.target} is not achievable")
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo + query.malicious


def simulate_success_rate(
    m: int,
    n: int,
    recovery: bool,
    trials: int,
    rng: np.random.Generator,
    malicious: int = 0,
) -> float:
    """Monte-Carlo oracle; adversarial writers occupy `malicious` distinct cells."""
    if n < 1 or m < 1:
        raise InvalidArgument("Need m >= 1 and n >= 1")
    total = 0.0
    for _ in range(trials):
        counts = np.bincount(rng.integers(0, n, size=m), minlength=n)
        clean = np.ones(n, dtype=bool)
        if malicious:
            clean[rng.choice(n, size=min(malicious, n), replace=False)] = False
        delivered = int(np.count_nonzero((counts == 1) & clean))
        if recovery:
            delivered += 2 * int(np.count_nonzero((counts == 2) & clean))
        total += delivered / m
    return total / trials


def sizing_table(
    m: int,
    malicious: int,
    target: float,
    recovery: bool,
    trials: int,
    seed: int = 0,
) -> list[dict]:
    """Rows of (n, predicted, exact, simulated) around the required size."""
    n = required_table_size(SizingQuery(m=m, malicious=malicious, target=target, recovery=recovery))
    rng = np.random.default_rng(seed)
    rows = []
    for factor in (0.5, 0.75, 1.0, 1.5, 2.0):
        size = max(malicious + 1, int(round(n * factor)))
        effective = size - malicious
        simulated = simulate_success_rate(m, size, recovery, trials, rng, malicious) if trials else None
        rows.append(
            {
                "n": size,
                "predicted": expected_success_rate(m, effective, recovery),
                "exact": exact_success_rate(m, effective, recovery),
                "simulated": simulated,
            }
        )
    logger.debug(f"Sizing table for m={m}, malicious={malicious}: required n={n}")
    return rows


def encode_with_recovery(m: int) -> tuple[int, int]:
    m %= P
    if m == 0:
        raise InvalidArgument("Zero is reserved for empty cells")
    return m, (m * m) % P


@dataclass(frozen=True)
class CellDecode:
    status: CellStatus
    values: tuple[int, ...] = ()


def decode_cell(s1: int, s2: int) -> CellDecode:
    s1 %= P
    s2 %= P
    if s1 == 0 and s2 == 0:
        return CellDecode(CellStatus.EMPTY)
    if (s1 * s1) % P == s2:
        return CellDecode(CellStatus.SINGLE, (s1,))
    delta = fp_sqrt((2 * s2 - s1 * s1) % P)
    if delta is None:
        return CellDecode(CellStatus.UNRECOVERABLE)
    a = ((s1 + delta) * _INV2) % P
    b = ((s1 - delta) * _INV2) % P
    if a == 0 or b == 0:
        return CellDecode(CellStatus.UNRECOVERABLE)
    return CellDecode(CellStatus.PAIR, (min(a, b), max(a, b)))


@dataclass(frozen=True)
class RowDecode:
    status: CellStatus
    messages: tuple[bytes, ...] = ()


class RecoveryCodec:
    """Chunked (m, m^2) coding of one row, with a linear checksum chunk.

    Chunk values are 7 message bytes plus one, so never zero. The checksum is
    h = sum(k_c * m_c) with hash-derived nonzero k_c; a two-message row is split
    by finding the chunk orientation that satisfies the checksum of one message.
    """

    def __init__(self, message_bytes: int):
        self.message_bytes = message_bytes
        self.chunks = math.ceil(message_bytes / CHUNK_BYTES)
        if self.chunks > MAX_RECOVERY_CHUNKS:
            raise InvalidArgument(
                f"Recovery coding supports rows up to {MAX_RECOVERY_CHUNKS * CHUNK_BYTES} bytes"
            )
        self.width = 2 * (self.chunks + 1)
        self.coefficients = [
            int.from_bytes(sha256(b"riposte/checksum", i.to_bytes(4, "big")), "big") % (P - 1) + 1
            for i in range(self.chunks)
        ]

    def chunk_values(self, padded: bytes) -> list[int]:
        if len(padded) != self.message_bytes:
            raise InvalidArgument(f"Row message must be {self.message_bytes} bytes")
        data = padded.ljust(self.chunks * CHUNK_BYTES, b"\x00")
        return [int.from_bytes(data[i:i + CHUNK_BYTES], "big") + 1 for i in range(0, len(data), CHUNK_BYTES)]

    def checksum(self, values: list[int]) -> int:
        return sum(k * v for k, v in zip(self.coefficients, values)) % P

    def encode_row(self, padded: bytes) -> list[int]:
        values = self.chunk_values(padded)
        values.append(self.checksum(values))
        out = []
        for value in values:
            out.extend(encode_with_recovery(value))
        return out

    def _message(self, values: list[int]) -> Optional[bytes]:
        parts = []
        for value in values:
            if not 1 <= value <= 1 << (8 * CHUNK_BYTES):
                return None
            parts.append((value - 1).to_bytes(CHUNK_BYTES, "big"))
        data = b"".join(parts)
        if any(data[self.message_bytes:]):
            return None
        return data[: self.message_bytes]

    def decode_row(self, row: list[int]) -> RowDecode:
        cells = [decode_cell(int(row[2 * i]), int(row[2 * i + 1])) for i in range(self.chunks + 1)]
        statuses = {c.status for c in cells}

        if statuses == {CellStatus.EMPTY}:
            return RowDecode(CellStatus.EMPTY)

        if statuses == {CellStatus.SINGLE}:
            values = [c.values[0] for c in cells]
            message = self._message(values[:-1])
            if message is None or self.checksum(values[:-1]) != values[-1]:
                return RowDecode(CellStatus.UNRECOVERABLE)
            return RowDecode(CellStatus.SINGLE, (message,))

        if statuses == {CellStatus.PAIR}:
            return self._split_pair(cells)

        return RowDecode(CellStatus.UNRECOVERABLE)

    def _split_pair(self, cells: list[CellDecode]) -> RowDecode:
        data_cells, check = cells[:-1], cells[-1]
        lows = [c.values[0] for c in data_cells]
        deltas = [(c.values[1] - c.values[0]) % P for c in data_cells]
        # message A takes the low checksum; find chunks where A takes the high value
        target = (check.values[0] - self.checksum(lows)) % P
        active = [i for i, d in enumerate(deltas) if d]
        weights = [(self.coefficients[i] * deltas[i]) % P for i in active]

        pairs = set()
        for mask in _subset_solutions(weights, target):
            a_values = list(lows)
            for bit, i in enumerate(active):
                if mask >> bit & 1:
                    a_values[i] = data_cells[i].values[1]
            b_values = [(c.values[0] + c.values[1] - a) % P for c, a in zip(data_cells, a_values)]
            a_msg, b_msg = self._message(a_values), self._message(b_values)
            if a_msg is None or b_msg is None:
                continue
            pairs.add(tuple(sorted((a_msg, b_msg))))

        if len(pairs) != 1:
            return RowDecode(CellStatus.UNRECOVERABLE)
        return RowDecode(CellStatus.PAIR, pairs.pop())


def _subset_sums(weights: list[int]) -> list[int]:
    """sums[mask] = sum of weights selected by mask, mod P."""
    sums = [0]
    for w in weights:
        sums = sums + [(s + w) % P for s in sums]
    return sums


def _subset_solutions(weights: list[int], target: int) -> list[int]:
    """Every subset mask whose weights sum to target (meet in the middle)."""
    half = len(weights) // 2
    left, right = weights[:half], weights[half:]
    table: dict[int, list[int]] = {}
    for mask, total in enumerate(_subset_sums(left)):
        table.setdefault(total, []).append(mask)
    solutions = []
    for rmask, total in enumerate(_subset_sums(right)):
        for lmask in table.get((target - total) % P, ()):
            solutions.append(lmask | (rmask << half))
    return solutions
