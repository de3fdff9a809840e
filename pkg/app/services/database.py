"""
Per-server database share: streaming accumulation, reveal, snapshots.

Only the accumulated share is kept; a key is dropped as soon as it has been
added in.
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from loguru import logger

from app.core.codec import Reader, lp, sha256
from app.core.errors import DecodeError, EpochClosed, InvalidArgument, NotValidated
from app.core.payload import PayloadField
from app.core.types import CellStatus, EpochConfig, EpochReport, RevealRecord
from app.dpf.multi_server import DpfSKey, dpfs_eval_full
from app.dpf.toy import ToyKey, toy_eval_full
from app.dpf.two_server import Dpf2Key, DpfStats, dpf2_eval_full
from app.services.payloads import RowLayout, layout_for

SNAPSHOT_MAGIC = b"RPSN"
SNAPSHOT_VERSION = 1
NONCE_BYTES = 16
COVER_ROW = 0

AnyKey = Union[ToyKey, Dpf2Key, DpfSKey]


@dataclass(frozen=True, eq=False)
class ValidatedWrite:
    """A key that passed audit or proof checks, optionally with its precomputed evaluation."""

    key: AnyKey
    nonce: bytes = b""
    evaluation: Optional[np.ndarray] = None


def evaluate_key(key: AnyKey, config: EpochConfig, payload: PayloadField, stats: DpfStats | None = None) -> np.ndarray:
    if isinstance(key, Dpf2Key):
        return dpf2_eval_full(key, config.geometry, payload, stats)
    if isinstance(key, DpfSKey):
        return dpfs_eval_full(key, config.geometry, payload, stats)
    if isinstance(key, ToyKey):
        return toy_eval_full(key)
    raise TypeError(f"Not a DPF key: {type(key).__name__}")


@dataclass
class DatabaseShare:
    epoch_id: int
    config: EpochConfig
    rows: Optional[np.ndarray] = None
    applied_count: int = 0
    closed: bool = False
    layout: RowLayout = field(init=False, repr=False)

    def __post_init__(self):
        self.layout = layout_for(self.config)
        if self.rows is None:
            self.rows = self.payload.zeros(self.config.geometry.rows)
        if self.rows.shape != (self.config.geometry.rows, self.payload.width):
            raise InvalidArgument("Share rows do not match the epoch geometry")

    @property
    def payload(self) -> PayloadField:
        return self.layout.field

    @property
    def geometry(self):
        return self.config.geometry

    def close(self):
        self.closed = True

    def to_bytes(self) -> bytes:
        return self.payload.rows_to_bytes(self.rows)


def update(share: DatabaseShare, write: ValidatedWrite, stats: DpfStats | None = None) -> DatabaseShare:
    """rows += Eval(key, l') for every l'; the key itself is not retained."""
    if not isinstance(write, ValidatedWrite):
        raise NotValidated("Only validated writes can be applied to a share")
    if share.closed:
        raise EpochClosed(f"Epoch {share.epoch_id} is closed")
    evaluation = write.evaluation
    if evaluation is None:
        evaluation = evaluate_key(write.key, share.config, share.payload, stats)
    if evaluation.shape != share.rows.shape:
        raise InvalidArgument("Evaluation does not match the share geometry")
    share.rows = share.payload.add(share.rows, evaluation)
    share.applied_count += 1
    return share


def combine_shares(shares: Sequence[DatabaseShare]) -> np.ndarray:
    if not shares:
        raise InvalidArgument("Reveal needs at least one share")
    first = shares[0]
    for s in shares[1:]:
        if s.epoch_id != first.epoch_id:
            raise InvalidArgument(f"Epoch mismatch: {s.epoch_id} != {first.epoch_id}")
        if s.config != first.config:
            raise InvalidArgument("Shares were built under different epoch configurations")
    total = first.rows
    for s in shares[1:]:
        total = first.payload.add(total, s.rows)
    return total


def classify_rows(epoch_id: int, table: np.ndarray, layout: RowLayout) -> EpochReport:
    report = EpochReport(epoch_id=epoch_id, rows=len(table))
    report.cover_nonempty = not layout.field.is_zero(table[COVER_ROW])
    for row in range(1, len(table)):
        decoded = layout.decode(table[row])
        if decoded.status == CellStatus.EMPTY:
            report.empty += 1
            continue
        if decoded.status == CellStatus.UNRECOVERABLE:
            report.unrecoverable += 1
            report.records.append(RevealRecord(row=row, status=decoded.status))
            continue
        if decoded.status == CellStatus.PAIR:
            report.pair += 1
        else:
            report.single += 1
        for message in decoded.messages:
            report.records.append(RevealRecord(row=row, status=decoded.status, message=message.hex()))
    return report


def reveal(
    shares: Sequence[DatabaseShare],
    rejected_by_reason: Optional[dict[str, int]] = None,
) -> tuple[np.ndarray, EpochReport]:
    """Combine the shares of one epoch and decode every row."""
    table = combine_shares(shares)
    report = classify_rows(shares[0].epoch_id, table, shares[0].layout)
    report.accepted = shares[0].applied_count
    if rejected_by_reason:
        report.rejected_by_reason = dict(rejected_by_reason)
        report.rejected = sum(rejected_by_reason.values())
    return table, report


def nonce_digest(nonces: Iterable[bytes]) -> bytes:
    return sha256(b"riposte/nonces", *sorted(nonces))


def snapshot_bytes(share: DatabaseShare, nonces: Iterable[bytes]) -> bytes:
    """magic, version, config JSON, epoch u64, count u32, rows, sorted nonce set."""
    ordered = sorted(nonces)
    config = share.config.model_dump_json().encode()
    return b"".join(
        [
            SNAPSHOT_MAGIC,
            bytes([SNAPSHOT_VERSION]),
            lp(config),
            share.epoch_id.to_bytes(8, "big"),
            share.applied_count.to_bytes(4, "big"),
            lp(share.to_bytes()),
            len(ordered).to_bytes(4, "big"),
            b"".join(ordered),
        ]
    )


def load_snapshot(data: bytes) -> tuple[DatabaseShare, set[bytes]]:
    reader = Reader(data)
    if reader.take(4) != SNAPSHOT_MAGIC or reader.u8() != SNAPSHOT_VERSION:
        raise DecodeError("Not a share snapshot")
    try:
        config = EpochConfig.model_validate_json(reader.lp())
    except ValueError as e:
        raise DecodeError(f"Invalid snapshot config: {e}") from e
    epoch_id = reader.u64be()
    applied = reader.u32be()
    share = DatabaseShare(epoch_id=epoch_id, config=config, applied_count=applied)
    share.rows = share.payload.rows_from_bytes(reader.lp(), config.geometry.rows)
    nonces = {reader.take(NONCE_BYTES) for _ in range(reader.u32be())}
    reader.finish()
    share.close()
    return share, nonces


def persist_epoch(data_dir: str, node_id: str, share: DatabaseShare, nonces: Iterable[bytes], report: EpochReport) -> Path:
    """Write the share snapshot and the NDJSON board for a revealed epoch."""
    base = Path(data_dir) / node_id
    os.makedirs(base, exist_ok=True)
    (base / f"epoch-{share.epoch_id}.snapshot").write_bytes(snapshot_bytes(share, nonces))
    board = base / f"epoch-{share.epoch_id}.ndjson"
    write_board(report, board)
    logger.info(f"Persisted epoch {share.epoch_id} to {base}")
    return board


def write_board(report: EpochReport, path: Path):
    with open(path, "w") as f:
        for record in report.records:
            f.write(json.dumps({"row": record.row, "status": record.status.value, "message": record.message}) + "\n")


def read_board(path: Path) -> list[RevealRecord]:
    with open(path) as f:
        return [RevealRecord.model_validate_json(line) for line in f if line.strip()]
