"""Straw-man DPF: every key is a full-length additive share of m*e_l."""

from dataclasses import dataclass

import numpy as np

from app.core.errors import InvalidArgument
from app.core.payload import PayloadField


@dataclass(frozen=True, eq=False)
class ToyKey:
    rows: np.ndarray


def toy_gen(index: int, message: np.ndarray, n_servers: int, table_rows: int, field: PayloadField, rng) -> list[ToyKey]:
    if not 0 <= index < table_rows:
        raise InvalidArgument(f"Index {index} outside table of {table_rows} rows")
    if n_servers < 2:
        raise InvalidArgument("Toy DPF needs at least two servers")

    keys = [field.random_rows(table_rows, rng) for _ in range(n_servers - 1)]
    last = field.zeros(table_rows)
    last[index] = message
    for k in keys:
        last = field.sub(last, k)
    return [ToyKey(rows=k) for k in keys] + [ToyKey(rows=last)]


def toy_eval(key: ToyKey, index: int) -> np.ndarray:
    if not 0 <= index < len(key.rows):
        raise InvalidArgument(f"Index {index} outside table of {len(key.rows)} rows")
    return key.rows[index]


def toy_eval_full(key: ToyKey) -> np.ndarray:
    return key.rows
