"""Auditor node: matches the two servers' masked vectors per (nonce, phase)."""

from dataclasses import dataclass, field
from typing import Optional

from loguru import logger

from app.core.errors import FrameError
from app.core.events import EventType
from app.core.frames import AuditReq, AuditResp, Frame, MsgType
from app.core.registry import AUDITOR_ID, server_id
from app.core.types import Phase, RejectReason, Verdict
from app.core.utils import write_audit_log
from app.services.audit import audit_decide

Outgoing = tuple[str, Frame]
AUDIT_SERVERS = (server_id(0), server_id(1))


@dataclass
class PendingAudit:
    deadline: float
    halves: dict[str, list[bytes]] = field(default_factory=dict)


class Auditor:
    """Sees only tag vectors: it learns whether they differ at exactly one place."""

    def __init__(self, timeout_s: float = 30.0, audit_log_path: Optional[str] = None):
        self.timeout_s = timeout_s
        self.audit_log_path = audit_log_path
        self.pending: dict[tuple[bytes, Phase], PendingAudit] = {}
        # decided or expired keys, kept until the given time so late halves are dropped
        self.closed: dict[tuple[bytes, Phase], float] = {}
        self.decided = 0
        self.rejected = 0
        self.late = 0

    def _close(self, key: tuple[bytes, Phase], now: float):
        self.closed[key] = now + 2 * self.timeout_s

    def submit(self, nonce: bytes, phase: Phase, sender: str, masked: list[bytes], now: float) -> Optional[Verdict]:
        """Record one half; returns the verdict once both servers have submitted."""
        key = (nonce, phase)
        if key in self.closed:
            self.late += 1
            logger.debug(f"{AUDITOR_ID}: dropping late half {nonce.hex()[:8]}/{phase.value} from {sender}")
            return None
        entry = self.pending.setdefault(key, PendingAudit(deadline=now + self.timeout_s))
        entry.halves[sender] = masked
        if len(entry.halves) < 2:
            return None
        del self.pending[key]
        self._close(key, now)
        verdict = audit_decide(entry.halves[AUDIT_SERVERS[0]], entry.halves[AUDIT_SERVERS[1]])
        self.decided += 1
        if not verdict.accepted:
            self.rejected += 1
        return verdict

    def expire(self, now: float) -> list[tuple[bytes, Phase]]:
        self.closed = {k: until for k, until in self.closed.items() if until > now}
        expired = [k for k, entry in self.pending.items() if now >= entry.deadline]
        for k in expired:
            del self.pending[k]
            self._close(k, now)
        return expired

    def _broadcast(self, nonce: bytes, phase: Phase, verdict: Verdict) -> list[Outgoing]:
        reason = 0 if verdict.accepted else verdict.reason.code
        frame = AuditResp(nonce, phase, verdict.accepted, reason).to_frame()
        return [(server, frame) for server in AUDIT_SERVERS]

    def handle(self, sender: str, frame: Frame, now: float) -> list[Outgoing]:
        if frame.msg_type != MsgType.AUDIT_REQ or sender not in AUDIT_SERVERS:
            logger.warning(f"{AUDITOR_ID}: unexpected {frame.msg_type.name} from {sender}")
            write_audit_log(EventType.PEER_FLAGGED, AUDITOR_ID, {"peer": sender}, self.audit_log_path)
            return []
        try:
            req: AuditReq = frame.body()
        except FrameError as e:
            logger.warning(f"{AUDITOR_ID}: malformed AUDIT_REQ from {sender}: {e}")
            return []
        verdict = self.submit(req.nonce, req.phase, sender, list(req.tags), now)
        if verdict is None:
            return []
        if not verdict.accepted:
            logger.info(f"{AUDITOR_ID}: phase {req.phase.value} rejected ({verdict.detail})")
        return self._broadcast(req.nonce, req.phase, verdict)

    def tick(self, now: float) -> list[Outgoing]:
        out: list[Outgoing] = []
        for nonce, phase in self.expire(now):
            logger.info(f"{AUDITOR_ID}: audit {nonce.hex()[:8]}/{phase.value} timed out")
            write_audit_log(EventType.AUDIT_TIMEOUT, AUDITOR_ID, {"nonce": nonce.hex()}, self.audit_log_path)
            out += self._broadcast(nonce, phase, Verdict.reject(RejectReason.TIMEOUT, "missing half"))
        return out

    def status(self) -> dict:
        return {
            "node": AUDITOR_ID,
            "pending": len(self.pending),
            "decided": self.decided,
            "rejected": self.rejected,
            "late": self.late,
        }
