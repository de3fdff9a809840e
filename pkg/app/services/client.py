"""
Write-request builder and submitter.

A request is one frame per server. Two-server requests carry the hash of the
other server's share so both derive the same audit nonce; multi-server
requests carry the public commitments, the proof and that server's openings.
"""

import asyncio
from dataclasses import dataclass
from typing import Optional

import httpx
import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, model_validator

from app.core.errors import FrameError, InvalidArgument
from app.core.frames import Frame, WriteAck, WriteShare, ZkBundle, decode_frame
from app.core.types import AuditRole, EpochConfig, Geometry, RejectReason, Variant
from app.dpf.keys import serialize_key
from app.dpf.multi_server import dpfs_gen
from app.dpf.two_server import PointFunction, dpf2_gen
from app.services.audit import derive_nonce, share_hash
from app.services.payloads import RowLayout, layout_for, pad_message
from app.services.server import zk_nonce
from app.zk.proof import encode_opening, encode_public, prove_write_valid

COVER_ROW = 0


class ClientConfig(BaseModel):
    servers: list[str] = Field(default_factory=list)
    auditor: Optional[str] = None
    epoch: EpochConfig
    timeout_s: float = 60.0

    @model_validator(mode="after")
    def _endpoints(self):
        if self.servers and len(self.servers) != self.epoch.n_servers:
            raise ValueError(f"Expected {self.epoch.n_servers} server endpoints, got {len(self.servers)}")
        if self.servers and (self.epoch.variant == Variant.TWO_SERVER) != bool(self.auditor):
            raise ValueError("An auditor endpoint is required for, and only for, the two-server variant")
        return self

    @property
    def geometry(self) -> Geometry:
        return self.epoch.geometry

    @property
    def layout(self) -> RowLayout:
        return layout_for(self.epoch)


@dataclass(frozen=True)
class WriteRequest:
    epoch_id: int
    row: int
    nonce: bytes
    frames: tuple[Frame, ...]

    def to_frames(self) -> list[Frame]:
        return list(self.frames)

    def sizes(self) -> list[int]:
        return [len(f.encode()) for f in self.frames]


def choose_row(rng, rows: int) -> int:
    """Uniform over [1, rows); row 0 is the cover-traffic sink."""
    if rows < 2:
        raise InvalidArgument("Need at least two rows to choose a writable one")
    return rng.randrange(1, rows)


def _build(payload: np.ndarray, row: int, cfg: ClientConfig, epoch_id: int, rng) -> WriteRequest:
    geometry = cfg.geometry
    field_ = cfg.layout.field
    pf = PointFunction(index=row, message=payload)

    if cfg.epoch.variant == Variant.TWO_SERVER:
        key_a, key_b = dpf2_gen(pf, geometry, field_, rng)
        share_a, share_b = serialize_key(key_a, field_), serialize_key(key_b, field_)
        hash_a, hash_b = share_hash(share_a), share_hash(share_b)
        frames = (
            WriteShare(epoch_id, hash_b, share_a).to_frame(),
            WriteShare(epoch_id, hash_a, share_b).to_frame(),
        )
        return WriteRequest(epoch_id, row, derive_nonce(hash_a, hash_b, AuditRole.A, epoch_id), frames)

    keys = dpfs_gen(pf, cfg.epoch.n_servers, geometry, field_, rng)
    commitments, openings, proof = prove_write_valid(keys, row, payload, geometry, field_, epoch_id, rng)
    public = encode_public(commitments, proof)
    frames = tuple(
        ZkBundle(epoch_id, serialize_key(key, field_), public, encode_opening(opening)).to_frame()
        for key, opening in zip(keys, openings)
    )
    return WriteRequest(epoch_id, row, zk_nonce(epoch_id, public), frames)


def make_write_request(msg: bytes, row: int, cfg: ClientConfig, epoch_id: int, rng) -> WriteRequest:
    if not 1 <= row < cfg.geometry.rows:
        raise InvalidArgument(f"Row {row} is not writable (1 <= row < {cfg.geometry.rows})")
    layout = cfg.layout
    payload = layout.embed(pad_message(msg, layout.message_bytes))
    return _build(payload, row, cfg, epoch_id, rng)


def make_cover_request(cfg: ClientConfig, epoch_id: int, rng) -> WriteRequest:
    """A random padded message written to row 0; same layout as a real write."""
    layout = cfg.layout
    filler = rng.randbytes(layout.capacity)
    payload = layout.embed(pad_message(filler, layout.message_bytes))
    return _build(payload, COVER_ROW, cfg, epoch_id, rng)


class SubmitResult(BaseModel):
    accepted: bool
    reasons: list[str] = Field(default_factory=list)


def summarize(acks: list[WriteAck]) -> SubmitResult:
    reasons = [RejectReason.from_code(a.reason).value for a in acks if not a.accepted and a.reason]
    return SubmitResult(accepted=all(a.accepted for a in acks), reasons=sorted(set(reasons)))


async def _post_frame(client: httpx.AsyncClient, url: str, frame: Frame) -> WriteAck:
    response = await client.post(
        f"{url.rstrip('/')}/api/write",
        content=frame.encode(),
        headers={"content-type": "application/octet-stream"},
    )
    response.raise_for_status()
    try:
        return decode_frame(response.content).body()
    except FrameError as e:
        logger.error(f"Malformed acknowledgement from {url}: {e}")
        raise


async def submit_write(cfg: ClientConfig, request: WriteRequest, client: httpx.AsyncClient) -> list[WriteAck]:
    """Post every share concurrently; one round trip per server."""
    if len(cfg.servers) != len(request.frames):
        raise InvalidArgument("One endpoint per share is required")
    return list(
        await asyncio.gather(*(_post_frame(client, url, frame) for url, frame in zip(cfg.servers, request.frames)))
    )


async def fetch_epoch(cfg: ClientConfig, client: httpx.AsyncClient) -> int:
    response = await client.get(f"{cfg.servers[0].rstrip('/')}/api/epoch")
    response.raise_for_status()
    return int(response.json()["epoch_id"])
