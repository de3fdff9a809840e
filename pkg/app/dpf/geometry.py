"""Key-size-optimal x-by-y layout of the table."""

import math

from app.core.errors import InvalidArgument
from app.core.types import Geometry, Variant

SEED_BITS = 128
SCALAR_BITS = 256


def key_cost(x: int, y: int, alpha: int, beta: int) -> int:
    """Key size in bits: one bit and one seed per column, one payload per row."""
    return (1 + alpha) * x + beta * y


def optimize_geometry(rows: int, alpha: int, beta: int, row_bytes: int | None = None) -> Geometry:
    """Integer (x, y) minimizing (1+alpha)x + beta*y subject to x*y >= rows.

    Starts from the rounded real optimum x = sqrt(beta/(1+alpha)) * sqrt(rows), then
    scans every x whose cost could still beat the incumbent. Ties go to the smaller x.
    """
    if rows < 1 or alpha < 1 or beta < 1:
        raise InvalidArgument(f"Invalid geometry inputs: rows={rows}, alpha={alpha}, beta={beta}")

    best: tuple[int, int] | None = None

    def consider(x: int):
        nonlocal best
        x = min(max(1, x), rows)
        y = -(-rows // x)
        candidate = (key_cost(x, y, alpha, beta), x)
        if best is None or candidate < best:
            best = candidate

    x_real = math.sqrt(beta / (1 + alpha)) * math.sqrt(rows)
    for x in range(math.floor(x_real) - 2, math.ceil(x_real) + 3):
        consider(x)

    # any better x must satisfy (1+alpha)x < cost and beta*ceil(rows/x) < cost
    lo = max(1, -(-rows * beta // best[0]))
    hi = min(rows, best[0] // (1 + alpha))
    for x in range(lo, hi + 1):
        consider(x)

    x = best[1]
    return Geometry(rows=rows, x=x, y=-(-rows // x), row_bytes=row_bytes or -(-beta // 8))


def column_bits(variant: Variant) -> int:
    """Bits each key spends per matrix column (the 1 + alpha term)."""
    if variant == Variant.TWO_SERVER:
        return 1 + SEED_BITS
    return 2 * SCALAR_BITS
