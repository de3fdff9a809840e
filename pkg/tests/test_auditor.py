import json

from app.core.frames import AuditReq, AuditResp
from app.core.registry import AUDITOR_ID, server_id
from app.core.types import Phase, RejectReason
from app.services.auditor import Auditor


NONCE = bytes(range(16))


def _req(tags, phase=Phase.T):
    return AuditReq(NONCE, phase, tuple(tags)).to_frame()


def test_auditor_waits_for_both_halves():
    auditor = Auditor()
    assert auditor.handle(server_id(0), _req([b"a" * 16, b"b" * 16]), 0.0) == []
    out = auditor.handle(server_id(1), _req([b"a" * 16, b"c" * 16]), 0.0)
    assert [dest for dest, _ in out] == [server_id(0), server_id(1)]
    resp = out[0][1].body()
    assert isinstance(resp, AuditResp) and resp.accepted and resp.phase == Phase.T
    assert auditor.status() == {"node": AUDITOR_ID, "pending": 0, "decided": 1, "rejected": 0, "late": 0}


def test_auditor_rejects_identical_vectors():
    auditor = Auditor()
    tags = [b"a" * 16, b"b" * 16]
    auditor.handle(server_id(0), _req(tags, Phase.U), 0.0)
    resp = auditor.handle(server_id(1), _req(tags, Phase.U), 0.0)[0][1].body()
    assert not resp.accepted
    assert RejectReason.from_code(resp.reason) == RejectReason.AUDIT


def test_phases_are_matched_separately():
    auditor = Auditor()
    auditor.handle(server_id(0), _req([b"a" * 16], Phase.T), 0.0)
    assert auditor.handle(server_id(1), _req([b"b" * 16], Phase.U), 0.0) == []
    assert len(auditor.pending) == 2


def test_missing_half_times_out():
    auditor = Auditor(timeout_s=5.0)
    auditor.handle(server_id(0), _req([b"a" * 16]), 0.0)
    assert auditor.tick(4.9) == []
    out = auditor.tick(5.0)
    assert len(out) == 2
    resp = out[0][1].body()
    assert RejectReason.from_code(resp.reason) == RejectReason.TIMEOUT
    assert not auditor.pending


def test_unexpected_sender_flagged(tmp_path):
    log = tmp_path / "audit.jsonl"
    auditor = Auditor(audit_log_path=str(log))
    assert auditor.handle(server_id(2), _req([b"a" * 16]), 0.0) == []
    assert auditor.handle(server_id(0), AuditResp(NONCE, Phase.T, True).to_frame(), 0.0) == []
    events = [json.loads(line) for line in log.read_text().splitlines()]
    assert [e["event_type"] for e in events] == ["peer_flagged", "peer_flagged"]
    assert events[0]["node"] == AUDITOR_ID


def test_late_half_after_decision_is_dropped(tmp_path):
    """A duplicate half for a decided audit neither reopens it nor times out later."""
    log = tmp_path / "audit.jsonl"
    auditor = Auditor(timeout_s=5.0, audit_log_path=str(log))
    auditor.handle(server_id(0), _req([b"a" * 16, b"b" * 16]), 0.0)
    assert len(auditor.handle(server_id(1), _req([b"a" * 16, b"c" * 16]), 0.0)) == 2
    assert auditor.handle(server_id(1), _req([b"a" * 16, b"c" * 16]), 1.0) == []
    assert not auditor.pending
    assert auditor.tick(6.0) == []
    assert auditor.status()["late"] == 1
    assert not log.exists() or "audit_timeout" not in log.read_text()


def test_late_half_after_timeout_is_dropped():
    auditor = Auditor(timeout_s=5.0)
    auditor.handle(server_id(0), _req([b"a" * 16]), 0.0)
    assert len(auditor.tick(5.0)) == 2
    assert auditor.handle(server_id(1), _req([b"b" * 16]), 6.0) == []
    assert not auditor.pending
    assert auditor.tick(20.0) == []


def test_closed_keys_are_forgotten():
    auditor = Auditor(timeout_s=5.0)
    auditor.handle(server_id(0), _req([b"a" * 16, b"b" * 16]), 0.0)
    auditor.handle(server_id(1), _req([b"a" * 16, b"c" * 16]), 0.0)
    auditor.tick(9.9)
    assert auditor.closed
    auditor.tick(10.0)
    assert not auditor.closed
