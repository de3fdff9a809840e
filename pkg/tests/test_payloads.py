import pytest

from app.core.errors import DecodeError, InvalidArgument
from app.core.payload import row_xor
from app.core.types import CellStatus, Variant
from app.services.payloads import pad_message, row_layout, unpad_message


def test_pad_and_unpad():
    """Prefix byte, u16 length, then the message, then zeros."""
    padded = pad_message(b"abc", 8)
    assert padded == b"\x01\x00\x03abc\x00\x00"
    assert unpad_message(padded) == b"abc"
    assert pad_message(b"", 4) == b"\x01\x00\x00\x00"
    assert unpad_message(b"\x01\x00\x00\x00") == b""


@pytest.mark.parametrize("msg", [b"ab\x00\x00", b"\x00", b"\x00" * 13, b"x\x00y\x00"])
def test_trailing_zero_bytes_survive(msg):
    assert unpad_message(pad_message(msg, 16)) == msg


def test_pad_capacity():
    assert len(pad_message(bytes(5), 8)) == 8
    with pytest.raises(InvalidArgument):
        pad_message(bytes(6), 8)
    with pytest.raises(DecodeError):
        unpad_message(b"\x00abc")
    with pytest.raises(DecodeError):
        unpad_message(b"\x01\x00\x09abc")
    with pytest.raises(DecodeError):
        unpad_message(b"\x01\x00\x01ab\x00")


@pytest.mark.parametrize(
    "variant,recovery,group",
    [
        (Variant.TWO_SERVER, False, "p256"),
        (Variant.TWO_SERVER, True, "p256"),
        (Variant.MULTI_SERVER, False, "schnorr64"),
        (Variant.MULTI_SERVER, False, "p256"),
    ],
)
def test_layout_embed_decode(variant, recovery, group):
    """A single embedded message decodes back from its row."""
    layout = row_layout(variant, 32, recovery, group)
    row = layout.embed(pad_message(b"board message", 32))
    decoded = layout.decode(row)
    assert decoded.status == CellStatus.SINGLE
    assert decoded.messages == (b"board message",)
    assert layout.capacity == 29


def test_layout_empty_row():
    layout = row_layout(Variant.TWO_SERVER, 16)
    assert layout.decode(layout.field.zeros(1)[0]).status == CellStatus.EMPTY


def test_xor_collision_is_unrecoverable():
    """Two XOR-ed messages lose the prefix byte."""
    layout = row_layout(Variant.TWO_SERVER, 16)
    a = layout.embed(pad_message(b"first", 16))
    b = layout.embed(pad_message(b"second", 16))
    assert layout.decode(layout.field.add(a, b)).status == CellStatus.UNRECOVERABLE


def test_group_collision_is_unrecoverable():
    layout = row_layout(Variant.MULTI_SERVER, 16, group="schnorr64")
    a = layout.embed(pad_message(b"first", 16))
    b = layout.embed(pad_message(b"second", 16))
    assert layout.decode(layout.field.add(a, b)).status == CellStatus.UNRECOVERABLE


def test_recovery_layout_splits_pairs():
    layout = row_layout(Variant.TWO_SERVER, 32, recovery=True)
    a = layout.embed(pad_message(b"alice", 32))
    b = layout.embed(pad_message(b"bob", 32))
    decoded = layout.decode(layout.field.add(a, b))
    assert decoded.status == CellStatus.PAIR
    assert set(decoded.messages) == {b"alice", b"bob"}


def test_layout_validation():
    with pytest.raises(InvalidArgument):
        row_layout(Variant.TWO_SERVER, 3)
    with pytest.raises(InvalidArgument):
        row_layout(Variant.TWO_SERVER, 16).embed(b"\x01short")


def test_row_xor():
    assert row_xor(b"\x0f\xf0", b"\xff\xff") == b"\xf0\x0f"
    assert row_xor(b"abc", b"abc") == bytes(3)
    with pytest.raises(InvalidArgument):
        row_xor(b"ab", b"abc")
