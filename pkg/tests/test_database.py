import random

import pytest

from app.core.errors import DecodeError, EpochClosed, InvalidArgument, NotValidated
from app.core.types import CellStatus
from app.dpf.two_server import PointFunction, dpf2_gen
from app.services.database import (
    DatabaseShare,
    ValidatedWrite,
    load_snapshot,
    read_board,
    reveal,
    snapshot_bytes,
    update,
    write_board,
)
from app.services.payloads import layout_for, pad_message

from tests.conftest import epoch_config


CONFIG = epoch_config(rows=32)


def _shares(epoch_id=1, config=CONFIG):
    return DatabaseShare(epoch_id, config), DatabaseShare(epoch_id, config)


def _write(shares, row, message, rng, config=CONFIG):
    layout = layout_for(config)
    payload = layout.embed(pad_message(message, layout.message_bytes))
    a, b = dpf2_gen(PointFunction(row, payload), config.geometry, layout.field, rng)
    update(shares[0], ValidatedWrite(a))
    update(shares[1], ValidatedWrite(b))


def test_reveal_decodes_each_row():
    rng = random.Random(80)
    shares = _shares()
    _write(shares, 3, b"three", rng)
    _write(shares, 17, b"seventeen", rng)
    table, report = reveal(shares, {"audit": 2})

    assert table.shape == (CONFIG.geometry.rows, 16)
    assert report.single == 2 and report.empty == CONFIG.geometry.rows - 3
    assert report.accepted == 2 and report.rejected == 2
    assert report.messages() == [b"three", b"seventeen"]
    assert not report.cover_nonempty


def test_single_share_reveals_nothing():
    """One share on its own is uniformly random, not the message."""
    rng = random.Random(81)
    shares = _shares()
    _write(shares, 5, b"secret", rng)
    assert b"secret" not in shares[0].to_bytes()


def test_collision_marked_unrecoverable():
    rng = random.Random(82)
    shares = _shares()
    _write(shares, 4, b"first", rng)
    _write(shares, 4, b"second", rng)
    _, report = reveal(shares)
    assert report.unrecoverable == 1
    assert report.records[0].status == CellStatus.UNRECOVERABLE


def test_recovery_layout_splits_collisions():
    config = epoch_config(rows=32, recovery=True)
    rng = random.Random(83)
    shares = _shares(config=config)
    _write(shares, 4, b"alice", rng, config)
    _write(shares, 4, b"bob", rng, config)
    _, report = reveal(shares)
    assert report.pair == 1
    assert sorted(report.messages()) == [b"alice", b"bob"]


def test_cover_row_is_not_published():
    rng = random.Random(84)
    shares = _shares()
    _write(shares, 0, b"cover", rng)
    _, report = reveal(shares)
    assert report.cover_nonempty
    assert report.records == []


def test_update_requires_validated_open_share():
    rng = random.Random(85)
    shares = _shares()
    layout = layout_for(CONFIG)
    a, _ = dpf2_gen(PointFunction(1, layout.field.random_rows(1, rng)[0]), CONFIG.geometry, layout.field, rng)
    with pytest.raises(NotValidated):
        update(shares[0], a)
    shares[0].close()
    with pytest.raises(EpochClosed):
        update(shares[0], ValidatedWrite(a))


def test_reveal_refuses_mixed_epochs():
    with pytest.raises(InvalidArgument):
        reveal([DatabaseShare(1, CONFIG), DatabaseShare(2, CONFIG)])
    with pytest.raises(InvalidArgument):
        reveal([])


def test_snapshot_roundtrip():
    rng = random.Random(86)
    shares = _shares(epoch_id=9)
    _write(shares, 2, b"saved", rng)
    nonces = {rng.randbytes(16) for _ in range(3)}
    share, loaded = load_snapshot(snapshot_bytes(shares[0], nonces))
    assert share.epoch_id == 9 and share.applied_count == 1 and share.config == CONFIG
    assert share.to_bytes() == shares[0].to_bytes()
    assert loaded == nonces

    with pytest.raises(DecodeError):
        load_snapshot(b"XXXX" + snapshot_bytes(shares[0], nonces)[4:])
    with pytest.raises(DecodeError):
        load_snapshot(snapshot_bytes(shares[0], nonces)[:-1])


def test_board_file_roundtrip(tmp_path):
    rng = random.Random(87)
    shares = _shares()
    _write(shares, 6, b"on the board", rng)
    _, report = reveal(shares)
    path = tmp_path / "board.ndjson"
    write_board(report, path)
    assert read_board(path) == report.records
