"""
Database-server node state machine.

`handle(sender, frame, now)` and `tick(now)` return the frames to send as
(destination, Frame) pairs; the node never does I/O itself, so the same code
runs under the HTTP runtime and the simulator.

Two-server writes: WRITE_SHARE -> COINFLIP_COMMIT / COINFLIP_REVEAL with the peer
-> AUDIT_REQ (t and u) -> AUDIT_RESP from the auditor -> update and WRITE_ACK.
Multi-server writes: ZK_BUNDLE -> local proof check -> ZK_VERDICT broadcast ->
update once every server accepted.

Epoch close: the leader (server 0) closes on policy, drains in-flight
requests, sends CLOSE(count, nonce digest); peers drain, answer CLOSE_ACK and
broadcast SHARE_XFER; every node reveals once it holds all shares.
"""

import random
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from app.core.codec import sha256
from app.core.errors import DecodeError, FrameError, ProtocolViolation
from app.core.events import EventType
from app.core.frames import (
    AuditReq,
    AuditResp,
    Close,
    CloseAck,
    CoinflipCommit,
    CoinflipReveal,
    Frame,
    MsgType,
    ShareXfer,
    WriteAck,
    WriteShare,
    ZkBundle,
    ZkVerdict,
)
from app.core.registry import AUDITOR_ID, server_id
from app.core.types import AuditRole, EpochConfig, EpochReport, EpochState, Phase, RejectReason, Variant, Verdict
from app.core.utils import write_audit_log
from app.dpf.keys import parse_key
from app.dpf.multi_server import DpfSKey
from app.dpf.two_server import Dpf2Key, DpfStats, dpf2_eval_full
from app.services.audit import (
    AuditSide,
    coin_flip,
    commit_contribution,
    derive_nonce,
    new_contribution,
    share_hash,
)
from app.services.database import (
    DatabaseShare,
    ValidatedWrite,
    evaluate_key,
    nonce_digest,
    persist_epoch,
    reveal,
    update,
)
from app.zk.proof import decode_opening, decode_public, encode_public, verify_write_share

Outgoing = tuple[str, Frame]

ZERO_NONCE = bytes(16)
NONCE_BYTES = 16


class NodeOptions(BaseModel):
    index: int = Field(ge=0)
    config: EpochConfig
    audit_timeout_s: float = Field(default=30.0, gt=0)
    close_retries: int = Field(default=3, ge=0)
    close_backoff_s: float = Field(default=1.0, gt=0)
    data_dir: Optional[str] = None
    audit_log_path: Optional[str] = None


def zk_nonce(epoch_id: int, public: bytes) -> bytes:
    return sha256(epoch_id.to_bytes(8, "big"), sha256(public))[:NONCE_BYTES]


@dataclass
class PendingWrite:
    nonce: bytes
    client: str
    deadline: float
    key: object = None
    side: Optional[AuditSide] = None
    contribution: bytes = b""
    peer_commitment: Optional[bytes] = None
    peer_v_digest: Optional[bytes] = None
    sent_audit: bool = False
    phases: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)


@dataclass
class Revealed:
    epoch_id: int
    table: np.ndarray
    report: EpochReport


class DatabaseServer:
    def __init__(self, options: NodeOptions, rng: Optional[random.Random] = None, now: float = 0.0):
        self.options = options
        self.index = options.index
        self.node_id = server_id(options.index)
        self.config = options.config
        self.n_servers = options.config.n_servers
        self.rng = rng or random.Random()
        self.stats = DpfStats()
        self.revealed: list[Revealed] = []
        self._now = now
        self._open_epoch(1, now)

    # -- epoch bookkeeping -------------------------------------------------

    @property
    def is_leader(self) -> bool:
        return self.index == 0

    @property
    def role(self) -> AuditRole:
        return AuditRole.A if self.index == 0 else AuditRole.B

    @property
    def peers(self) -> list[str]:
        return [server_id(i) for i in range(self.n_servers) if i != self.index]

    @property
    def accepted_count(self) -> int:
        return self.share.applied_count

    def _open_epoch(self, epoch_id: int, now: float):
        self.epoch_id = epoch_id
        self.state = EpochState.OPEN
        self.opened_at = now
        self.share = DatabaseShare(epoch_id=epoch_id, config=self.config)
        self.seen: set[bytes] = set()
        self.accepted: set[bytes] = set()
        self.rejected_by_reason: dict[str, int] = {}
        self.pending: dict[bytes, PendingWrite] = {}
        self.buffered: dict[bytes, list[tuple[float, str, Frame]]] = {}
        self.close_request: Optional[Close] = None
        self.close_acks: dict[str, CloseAck] = {}
        self.close_attempts = 0
        self.close_retry_at: Optional[float] = None
        self.close_sent = False
        self.shares_in: dict[str, bytes] = {}
        self.share_sent = False
        logger.info(f"{self.node_id}: epoch {epoch_id} open")

    def _audit_event(self, event: EventType, data: dict):
        write_audit_log(event, self.node_id, data, self.options.audit_log_path)

    # -- entry points ------------------------------------------------------

    def handle(self, sender: str, frame: Frame, now: float) -> list[Outgoing]:
        self._now = now
        try:
            kind = frame.msg_type
            if kind in (MsgType.WRITE_SHARE, MsgType.ZK_BUNDLE):
                return self._on_write(sender, frame, now)
            if kind in (MsgType.COINFLIP_COMMIT, MsgType.COINFLIP_REVEAL, MsgType.ZK_VERDICT):
                return self._on_peer_request_frame(sender, frame, now)
            if kind == MsgType.AUDIT_RESP and sender == AUDITOR_ID:
                return self._on_audit_resp(frame.body())
            if kind == MsgType.CLOSE:
                return self._on_close(sender, frame.body(), now)
            if kind == MsgType.CLOSE_ACK:
                return self._on_close_ack(sender, frame.body(), now)
            if kind == MsgType.SHARE_XFER:
                return self._on_share_xfer(sender, frame.body(), now)
        except FrameError as e:
            logger.warning(f"{self.node_id}: malformed {frame.msg_type.name} from {sender}: {e}")
            self._audit_event(EventType.PEER_FLAGGED, {"peer": sender, "error": str(e)})
            return []
        logger.warning(f"{self.node_id}: unexpected {frame.msg_type.name} from {sender}")
        return []

    def tick(self, now: float) -> list[Outgoing]:
        self._now = now
        out: list[Outgoing] = []
        for nonce, pending in list(self.pending.items()):
            if now >= pending.deadline:
                self._audit_event(EventType.AUDIT_TIMEOUT, {"nonce": nonce.hex()})
                out += self._finish(pending, Verdict.reject(RejectReason.TIMEOUT, "request deadline"))
        for nonce, frames in list(self.buffered.items()):
            kept = [entry for entry in frames if entry[0] > now]
            if kept:
                self.buffered[nonce] = kept
            else:
                del self.buffered[nonce]

        if self.is_leader and self.state == EpochState.OPEN and self._policy_due(now):
            self._begin_close()
        if self.state == EpochState.CLOSING:
            out += self._advance_close(now)
        return out

    # -- intake ------------------------------------------------------------

    def _ack(self, client: str, nonce: bytes, verdict: Verdict) -> Outgoing:
        reason = 0 if verdict.accepted else verdict.reason.code
        return client, WriteAck(nonce, verdict.accepted, reason).to_frame()

    def _reject_intake(self, client: str, nonce: bytes, reason: RejectReason, detail: str) -> list[Outgoing]:
        self._count_reject(reason)
        logger.info(f"{self.node_id}: rejected write ({reason.value}): {detail}")
        self._audit_event(EventType.WRITE_REJECTED, {"reason": reason.value, "detail": detail})
        return [self._ack(client, nonce, Verdict.reject(reason, detail))]

    def _count_reject(self, reason: RejectReason):
        self.rejected_by_reason[reason.value] = self.rejected_by_reason.get(reason.value, 0) + 1

    def _on_write(self, client: str, frame: Frame, now: float) -> list[Outgoing]:
        try:
            body = frame.body()
        except FrameError as e:
            return self._reject_intake(client, ZERO_NONCE, RejectReason.PARSE, str(e))

        if isinstance(body, WriteShare):
            if self.config.variant != Variant.TWO_SERVER:
                return self._reject_intake(client, ZERO_NONCE, RejectReason.PARSE, "audited write on a proof cluster")
            own_hash = share_hash(body.share)
            nonce = derive_nonce(own_hash, body.peer_hash, self.role, body.epoch_id)
        else:
            if self.config.variant != Variant.MULTI_SERVER:
                return self._reject_intake(client, ZERO_NONCE, RejectReason.PARSE, "proof bundle on an audited cluster")
            nonce = zk_nonce(body.epoch_id, body.public)

        if body.epoch_id != self.epoch_id:
            return self._reject_intake(client, nonce, RejectReason.EPOCH, f"epoch {body.epoch_id} != {self.epoch_id}")
        if self.state != EpochState.OPEN:
            return self._reject_intake(client, nonce, RejectReason.EPOCH, f"epoch {self.epoch_id} is {self.state.value}")
        if nonce in self.seen:
            return self._reject_intake(client, nonce, RejectReason.REPLAY, "nonce already seen this epoch")
        self.seen.add(nonce)

        pending = PendingWrite(nonce=nonce, client=client, deadline=now + 2 * self.options.audit_timeout_s)
        if isinstance(body, WriteShare):
            out = self._start_audit(pending, body)
        else:
            out = self._start_proof_check(pending, body)
        if nonce not in self.pending:
            return out
        for _, sender, buffered in self.buffered.pop(nonce, []):
            out += self._on_peer_request_frame(sender, buffered, now)
        return out

    def _start_audit(self, pending: PendingWrite, body: WriteShare) -> list[Outgoing]:
        field_ = self.share.payload
        try:
            key = parse_key(body.share, self.config.geometry, field_, party=self.index)
        except (DecodeError, ValueError) as e:
            return self._reject_intake(pending.client, pending.nonce, RejectReason.PARSE, str(e))
        if not isinstance(key, Dpf2Key):
            return self._reject_intake(pending.client, pending.nonce, RejectReason.PARSE, "not a two-server key")

        pending.key = key
        pending.side = AuditSide.prepare(key, body.share, self.config.geometry, field_, self.stats)
        pending.contribution = new_contribution(self.rng)
        self.pending[pending.nonce] = pending
        commit = CoinflipCommit(pending.nonce, commit_contribution(pending.contribution), pending.side.v_digest)
        return [(peer, commit.to_frame()) for peer in self.peers]

    def _start_proof_check(self, pending: PendingWrite, body: ZkBundle) -> list[Outgoing]:
        field_ = self.share.payload
        group = field_.group
        try:
            key = parse_key(body.share, self.config.geometry, field_, party=self.index)
            commitments, proof = decode_public(body.public, group)
            opening = decode_opening(body.opening, group)
        except (DecodeError, ValueError) as e:
            return self._reject_intake(pending.client, pending.nonce, RejectReason.PARSE, str(e))
        if not isinstance(key, DpfSKey) or encode_public(commitments, proof) != body.public:
            return self._reject_intake(pending.client, pending.nonce, RejectReason.PARSE, "non-canonical bundle")

        verdict = verify_write_share(
            self.index, key, commitments, opening, proof,
            self.config.geometry, field_, body.epoch_id, self.n_servers,
        )
        if not verdict.accepted:
            logger.info(f"{self.node_id}: proof rejected ({verdict.detail})")
        pending.key = key
        pending.verdicts[self.node_id] = verdict.accepted
        self.pending[pending.nonce] = pending
        reason = 0 if verdict.accepted else RejectReason.PROOF.code
        frame = ZkVerdict(pending.nonce, verdict.accepted, reason).to_frame()
        return [(peer, frame) for peer in self.peers] + self._maybe_finish_proof(pending)

    # -- peer and auditor frames -------------------------------------------

    def _on_peer_request_frame(self, sender: str, frame: Frame, now: float) -> list[Outgoing]:
        if sender not in self.peers:
            self._audit_event(EventType.PEER_FLAGGED, {"peer": sender, "frame": frame.msg_type.name})
            return []
        body = frame.body()
        pending = self.pending.get(body.nonce)
        if pending is None:
            self.buffered.setdefault(body.nonce, []).append((now + 2 * self.options.audit_timeout_s, sender, frame))
            return []
        if isinstance(body, CoinflipCommit):
            pending.peer_commitment = body.commitment
            pending.peer_v_digest = body.v_digest
            return [(sender, CoinflipReveal(pending.nonce, pending.contribution).to_frame())]
        if isinstance(body, CoinflipReveal):
            return self._on_reveal(pending, body)
        if isinstance(body, ZkVerdict):
            pending.verdicts[sender] = body.accepted
            return self._maybe_finish_proof(pending)
        return []

    def _on_reveal(self, pending: PendingWrite, body: CoinflipReveal) -> list[Outgoing]:
        if pending.peer_commitment is None or pending.sent_audit:
            return self._finish(pending, Verdict.reject(RejectReason.PROTOCOL, "reveal out of order"))
        if pending.peer_v_digest != pending.side.v_digest:
            return self._finish(pending, Verdict.reject(RejectReason.AUDIT, "v mismatch"))
        try:
            coins = coin_flip(pending.contribution, pending.peer_commitment, body.contribution, pending.nonce, self.role)
        except ProtocolViolation as e:
            self._audit_event(EventType.PEER_FLAGGED, {"peer": self.peers[0], "error": str(e)})
            return self._finish(pending, Verdict.reject(RejectReason.PROTOCOL, str(e)))
        pending.sent_audit = True
        return [
            (AUDITOR_ID, AuditReq(pending.nonce, phase, tuple(pending.side.masked(coins, phase))).to_frame())
            for phase in (Phase.T, Phase.U)
        ]

    def _on_audit_resp(self, body: AuditResp) -> list[Outgoing]:
        pending = self.pending.get(body.nonce)
        if pending is None or not pending.sent_audit:
            return []
        if not body.accepted:
            reason = RejectReason.from_code(body.reason) if body.reason else RejectReason.AUDIT
            return self._finish(pending, Verdict.reject(reason, f"auditor rejected phase {body.phase.value}"))
        pending.phases[body.phase] = True
        if len(pending.phases) < 2:
            return []
        evaluation = dpf2_eval_full(pending.key, self.config.geometry, self.share.payload, strips=pending.side.strips)
        return self._finish(pending, Verdict.accept(), evaluation)

    def _maybe_finish_proof(self, pending: PendingWrite) -> list[Outgoing]:
        if not all(pending.verdicts.values()):
            return self._finish(pending, Verdict.reject(RejectReason.PROOF, "a server rejected the proof"))
        if len(pending.verdicts) < self.n_servers:
            return []
        evaluation = evaluate_key(pending.key, self.config, self.share.payload, self.stats)
        return self._finish(pending, Verdict.accept(), evaluation)

    def _finish(self, pending: PendingWrite, verdict: Verdict, evaluation: Optional[np.ndarray] = None) -> list[Outgoing]:
        self.pending.pop(pending.nonce, None)
        self.buffered.pop(pending.nonce, None)
        if verdict.accepted:
            update(self.share, ValidatedWrite(pending.key, pending.nonce, evaluation))
            self.accepted.add(pending.nonce)
            logger.debug(f"{self.node_id}: accepted write {pending.nonce.hex()[:8]} ({self.accepted_count} this epoch)")
            self._audit_event(EventType.WRITE_ACCEPTED, {"epoch": self.epoch_id, "count": self.accepted_count})
        else:
            self._count_reject(verdict.reason)
            logger.info(f"{self.node_id}: rejected write ({verdict.reason.value}): {verdict.detail}")
            self._audit_event(EventType.WRITE_REJECTED, {"reason": verdict.reason.value, "detail": verdict.detail})
        out = [self._ack(pending.client, pending.nonce, verdict)]
        if self.is_leader and self.state == EpochState.OPEN and self._policy_due(self._now):
            self._begin_close()
        if self.state == EpochState.CLOSING:
            out += self._advance_close(None)
        return out

    # -- epoch close -------------------------------------------------------

    def _policy_due(self, now: float) -> bool:
        policy = self.config.policy
        if policy.threshold is not None and self.accepted_count >= policy.threshold:
            return True
        return policy.duration_s is not None and now - self.opened_at >= policy.duration_s

    def _begin_close(self):
        self.state = EpochState.CLOSING
        logger.info(f"{self.node_id}: closing epoch {self.epoch_id} with {self.accepted_count} writes")
        self._audit_event(EventType.EPOCH_CLOSING, {"epoch": self.epoch_id, "count": self.accepted_count})

    def close_epoch(self, now: float) -> list[Outgoing]:
        """Force the close flow (leader only); used by operators and tests."""
        self._now = now
        if not self.is_leader or self.state != EpochState.OPEN:
            return []
        self._begin_close()
        return self._advance_close(now)

    def _close_frame(self) -> Close:
        return Close(self.epoch_id, self.accepted_count, nonce_digest(self.accepted))

    def _advance_close(self, now: Optional[float]) -> list[Outgoing]:
        if self.pending and not self._leftovers_settled():
            return []
        if self.is_leader:
            return self._leader_close(now)
        return self._peer_close()

    def _leftovers_settled(self) -> bool:
        """A peer may drop in-flight requests once its count matches the leader's."""
        if self.is_leader or self.close_request is None:
            return False
        return self._matches(self.close_request)

    def _matches(self, close: Close) -> bool:
        return close.count == self.accepted_count and close.digest == nonce_digest(self.accepted)

    def _leader_close(self, now: Optional[float]) -> list[Outgoing]:
        if self.close_sent:
            if now is None or self.close_retry_at is None or now < self.close_retry_at:
                return []
        self.close_sent = True
        self.close_retry_at = None
        self.close_acks = {}
        self.close_attempts += 1
        frame = self._close_frame().to_frame()
        return [(peer, frame) for peer in self.peers]

    def _peer_close(self) -> list[Outgoing]:
        close = self.close_request
        if close is None:
            return []
        ok = self._matches(close)
        if not ok and self.pending:
            return []
        out: list[Outgoing] = []
        if ok:
            for pending in list(self.pending.values()):
                out += self._finish_quiet(pending, Verdict.reject(RejectReason.EPOCH, "epoch closed"))
        digest = nonce_digest(self.accepted)
        out.append((server_id(0), CloseAck(self.epoch_id, self.accepted_count, digest, ok).to_frame()))
        self.close_request = None
        if ok:
            if not self.share_sent:
                out += self._send_share()
            return out

        self.close_attempts += 1
        logger.warning(
            f"{self.node_id}: close mismatch for epoch {self.epoch_id} "
            f"(leader {close.count}, local {self.accepted_count})"
        )
        if self.close_attempts > self.options.close_retries:
            self._halt({server_id(0): close.count})
        return out

    def _finish_quiet(self, pending: PendingWrite, verdict: Verdict) -> list[Outgoing]:
        self.pending.pop(pending.nonce, None)
        self.buffered.pop(pending.nonce, None)
        self._count_reject(verdict.reason)
        return [self._ack(pending.client, pending.nonce, verdict)]

    def _send_share(self) -> list[Outgoing]:
        self.share.close()
        self.share_sent = True
        frame = ShareXfer(self.epoch_id, self.share.to_bytes()).to_frame()
        return [(peer, frame) for peer in self.peers] + self._maybe_reveal()

    def _on_close(self, sender: str, body: Close, now: float) -> list[Outgoing]:
        if sender != server_id(0) or self.is_leader:
            self._audit_event(EventType.PEER_FLAGGED, {"peer": sender, "frame": "CLOSE"})
            return []
        if body.epoch_id != self.epoch_id or self.state == EpochState.HALTED:
            return []
        if self.state == EpochState.OPEN:
            self._begin_close()
        self.close_request = body
        return self._advance_close(now)

    def _on_close_ack(self, sender: str, body: CloseAck, now: float) -> list[Outgoing]:
        if not self.is_leader or sender not in self.peers or body.epoch_id != self.epoch_id:
            return []
        if self.state != EpochState.CLOSING or self.share_sent:
            return []
        self.close_acks[sender] = body
        if len(self.close_acks) < len(self.peers):
            return []
        if all(ack.ok for ack in self.close_acks.values()):
            return self._send_share()
        if self.close_attempts > self.options.close_retries:
            self._halt({peer: ack.count for peer, ack in self.close_acks.items()})
            return []
        backoff = self.options.close_backoff_s * 2 ** (self.close_attempts - 1)
        self.close_retry_at = now + backoff
        logger.warning(f"{self.node_id}: close disagreement, retrying in {backoff:.1f}s")
        return []

    def _halt(self, counts: dict[str, int]):
        self.state = EpochState.HALTED
        logger.error(f"{self.node_id}: epoch {self.epoch_id} diverged ({counts}, local {self.accepted_count}); halting")
        self._audit_event(EventType.EPOCH_HALTED, {"epoch": self.epoch_id, "counts": counts})

    def _on_share_xfer(self, sender: str, body: ShareXfer, now: float) -> list[Outgoing]:
        if sender not in self.peers or body.epoch_id != self.epoch_id:
            return []
        self.shares_in[sender] = body.share
        return self._maybe_reveal()

    def _maybe_reveal(self) -> list[Outgoing]:
        if not self.share_sent or len(self.shares_in) < len(self.peers):
            return []
        shares = [self.share]
        for peer, data in sorted(self.shares_in.items()):
            try:
                rows = self.share.payload.rows_from_bytes(data, self.config.geometry.rows)
            except DecodeError as e:
                self.state = EpochState.HALTED
                logger.error(f"{self.node_id}: undecodable share from {peer}: {e}; halting")
                return []
            shares.append(DatabaseShare(self.epoch_id, self.config, rows, self.share.applied_count, closed=True))
        table, report = reveal(shares, self.rejected_by_reason)
        self.state = EpochState.REVEALED
        self.revealed.append(Revealed(self.epoch_id, table, report))
        logger.info(
            f"{self.node_id}: epoch {self.epoch_id} revealed: {report.single} single, "
            f"{report.pair} pair, {report.unrecoverable} unrecoverable, {report.rejected} rejected"
        )
        self._audit_event(
            EventType.EPOCH_REVEALED,
            {"epoch": self.epoch_id, "accepted": report.accepted, "rejected": report.rejected},
        )
        if self.options.data_dir:
            persist_epoch(self.options.data_dir, self.node_id, self.share, self.accepted, report)
        self._open_epoch(self.epoch_id + 1, self._now)
        return []

    # -- read side ---------------------------------------------------------

    def latest_report(self) -> Optional[EpochReport]:
        return self.revealed[-1].report if self.revealed else None

    def status(self) -> dict:
        return {
            "node": self.node_id,
            "epoch_id": self.epoch_id,
            "state": self.state.value,
            "accepted": self.accepted_count,
            "pending": len(self.pending),
            "rejected": dict(self.rejected_by_reason),
            "expansions": self.stats.expansions,
        }
