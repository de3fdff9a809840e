"""
Payload fields: the additive groups that table rows live in.

A row is a numpy vector of `width` elements; a table or an expansion is a
(rows, width) array. XOR rows are uint8 bytes, F_p rows are object arrays of
Python ints, group rows are object arrays of GroupElement.
"""

from abc import ABC, abstractmethod
from functools import reduce
from typing import Any

import numpy as np

from app.core.errors import DecodeError, InvalidArgument
from app.core.field import ELEMENT_BYTES, P, fp_from_bytes, fp_to_bytes
from app.core.group import PedersenParams
from app.core.prg import prg_expand, prg_expand_fp, shprg_expand


class PayloadField(ABC):
    kind: str
    width: int

    @property
    @abstractmethod
    def row_bytes(self) -> int:
        """Serialized size of one row."""

    @abstractmethod
    def zeros(self, n: int) -> np.ndarray: ...

    @abstractmethod
    def add(self, a: np.ndarray, b: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def neg(self, a: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def scale(self, k: int, a: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def expand(self, seed: Any, n: int) -> np.ndarray:
        """PRG expansion of one seed into n rows."""

    @abstractmethod
    def rows_to_bytes(self, rows: np.ndarray) -> bytes: ...

    @abstractmethod
    def rows_from_bytes(self, data: bytes, n: int) -> np.ndarray: ...

    @abstractmethod
    def random_rows(self, n: int, rng) -> np.ndarray: ...

    def sub(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.add(a, self.neg(b))

    def sum_rows(self, rows: np.ndarray) -> np.ndarray:
        """Sum of the rows of an (n, width) array."""
        return reduce(self.add, rows, self.zeros(1)[0])

    def is_zero(self, row: np.ndarray) -> bool:
        return self.rows_to_bytes(row.reshape(1, self.width)) == self.rows_to_bytes(self.zeros(1))

    def row_bits(self) -> int:
        return 8 * self.row_bytes


class XorField(PayloadField):
    """Rows of raw bytes under XOR."""

    kind = "xor"

    def __init__(self, row_bytes: int):
        if row_bytes < 1:
            raise InvalidArgument("row_bytes must be positive")
        self.width = row_bytes

    @property
    def row_bytes(self) -> int:
        return self.width

    def zeros(self, n: int) -> np.ndarray:
        return np.zeros((n, self.width), dtype=np.uint8)

    def add(self, a, b):
        return np.bitwise_xor(a, b)

    def neg(self, a):
        return a

    def scale(self, k, a):
        return a.copy() if k % 2 else np.zeros_like(a)

    def expand(self, seed: bytes, n: int) -> np.ndarray:
        return np.frombuffer(prg_expand(seed, n * self.width), dtype=np.uint8).reshape(n, self.width)

    def sum_rows(self, rows):
        if len(rows) == 0:
            return self.zeros(1)[0]
        return np.bitwise_xor.reduce(rows, axis=0)

    def is_zero(self, row):
        return not row.any()

    def rows_to_bytes(self, rows):
        return np.ascontiguousarray(rows, dtype=np.uint8).tobytes()

    def rows_from_bytes(self, data, n):
        if len(data) != n * self.width:
            raise DecodeError(f"Expected {n * self.width} row bytes, got {len(data)}")
        return np.frombuffer(data, dtype=np.uint8).reshape(n, self.width).copy()

    def random_rows(self, n, rng):
        return np.frombuffer(rng.randbytes(n * self.width), dtype=np.uint8).reshape(n, self.width).copy()


def row_xor(a: bytes, b: bytes) -> bytes:
    """Componentwise XOR of two equal-length row payloads."""
    if len(a) != len(b):
        raise InvalidArgument(f"Row length mismatch: {len(a)} != {len(b)}")
    return np.bitwise_xor(np.frombuffer(a, dtype=np.uint8), np.frombuffer(b, dtype=np.uint8)).tobytes()


class PrimeField(PayloadField):
    """Rows of `width` elements of F_p (collision-coded payloads)."""

    kind = "fp"

    def __init__(self, width: int):
        if width < 1:
            raise InvalidArgument("width must be positive")
        self.width = width

    @property
    def row_bytes(self) -> int:
        return self.width * ELEMENT_BYTES

    def zeros(self, n):
        return np.zeros((n, self.width), dtype=np.int64).astype(object)

    def add(self, a, b):
        return (a + b) % P

    def neg(self, a):
        return (-a) % P

    def scale(self, k, a):
        return (int(k) * a) % P

    def expand(self, seed: bytes, n: int) -> np.ndarray:
        return np.array(prg_expand_fp(seed, n * self.width), dtype=object).reshape(n, self.width)

    def sum_rows(self, rows):
        if len(rows) == 0:
            return self.zeros(1)[0]
        return rows.sum(axis=0) % P

    def is_zero(self, row):
        return not any(row)

    def rows_to_bytes(self, rows):
        return b"".join(fp_to_bytes(int(v)) for v in np.asarray(rows).ravel())

    def rows_from_bytes(self, data, n):
        if len(data) != n * self.row_bytes:
            raise DecodeError(f"Expected {n * self.row_bytes} row bytes, got {len(data)}")
        try:
            values = [fp_from_bytes(data[i:i + ELEMENT_BYTES]) for i in range(0, len(data), ELEMENT_BYTES)]
        except InvalidArgument as e:
            raise DecodeError(str(e)) from e
        return np.array(values, dtype=object).reshape(n, self.width)

    def random_rows(self, n, rng):
        return np.array([rng.randrange(P) for _ in range(n * self.width)], dtype=object).reshape(n, self.width)


class GroupField(PayloadField):
    """Rows of `chunks` group elements; expansion is the seed-homomorphic PRG."""

    kind = "group"

    def __init__(self, params: PedersenParams, chunks: int = 1):
        if chunks < 1:
            raise InvalidArgument("chunks must be positive")
        self.params = params
        self.group = params.group
        self.width = chunks

    @property
    def row_bytes(self) -> int:
        return self.width * self.group.element_bytes

    def zeros(self, n):
        return np.full((n, self.width), self.group.identity, dtype=object)

    def add(self, a, b):
        return a + b

    def neg(self, a):
        return -a

    def scale(self, k, a):
        return int(k) * a

    def expand(self, seed: int, n: int) -> np.ndarray:
        return self._to_array(shprg_expand(seed, n * self.width, self.params), n)

    def _to_array(self, items: list, n: int) -> np.ndarray:
        arr = np.empty(n * self.width, dtype=object)
        for i, item in enumerate(items):
            arr[i] = item
        return arr.reshape(n, self.width)

    def is_zero(self, row):
        return all(e.is_identity() for e in row)

    def rows_to_bytes(self, rows):
        return b"".join(e.to_bytes() for e in np.asarray(rows).ravel())

    def rows_from_bytes(self, data, n):
        size = self.group.element_bytes
        if len(data) != n * self.row_bytes:
            raise DecodeError(f"Expected {n * self.row_bytes} row bytes, got {len(data)}")
        items = [self.group.decode(data[i:i + size]) for i in range(0, len(data), size)]
        return self._to_array(items, n)

    def random_rows(self, n, rng):
        items = [self.group.random_scalar(rng) * self.params.P for _ in range(n * self.width)]
        return self._to_array(items, n)


def as_row(field: PayloadField, values: Any) -> np.ndarray:
    """Coerce a single row (serialized bytes, int list or element list) into a row array."""
    if isinstance(values, (bytes, bytearray)):
        return field.rows_from_bytes(bytes(values), 1)[0]
    if field.kind == "group":
        arr = np.empty(field.width, dtype=object)
        for i, item in enumerate(values):
            arr[i] = item
        return arr
    dtype = np.uint8 if field.kind == "xor" else object
    arr = np.array(list(values), dtype=dtype)
    if arr.shape != (field.width,):
        raise InvalidArgument(f"Row must have {field.width} elements")
    return arr
