import json
import random

import pytest

from app.core.frames import Close
from app.core.registry import server_id
from app.core.types import EpochState, MutationStrategy, RejectReason, Variant
from app.services.client import ClientConfig, make_write_request
from app.services.database import load_snapshot
from app.services.server import DatabaseServer, NodeOptions
from app.services.simulator import make_malicious_request

from tests.conftest import build_mesh, epoch_config


def _request(config, message=b"hello", row=3, epoch_id=1, seed=1):
    return make_write_request(message, row, ClientConfig(epoch=config), epoch_id, random.Random(seed))


def _reasons(mesh, client):
    return [RejectReason.from_code(a.reason) for a in mesh.inbox[client] if not a.accepted]


def _close(mesh):
    leader = mesh.nodes[server_id(0)]
    mesh.dispatch(server_id(0), leader.close_epoch(mesh.now))
    mesh.run()
    return leader


def test_two_server_write_accepted(two_server_mesh, two_server_config):
    """Both servers acknowledge an honest write and add it to their shares."""
    two_server_mesh.submit("client:a", _request(two_server_config))
    two_server_mesh.run()
    acks = two_server_mesh.inbox["client:a"]
    assert len(acks) == 2 and all(a.accepted for a in acks)
    assert [s.accepted_count for s in two_server_mesh.servers] == [1, 1]


def test_close_reveals_board(two_server_mesh, two_server_config):
    """After the close handshake every server holds the same revealed table."""
    for i, row in enumerate([2, 5, 9]):
        two_server_mesh.submit(f"client:{i}", _request(two_server_config, f"msg{i}".encode(), row, seed=i))
    two_server_mesh.run()
    _close(two_server_mesh)

    s0, s1 = two_server_mesh.servers
    assert s0.epoch_id == s1.epoch_id == 2
    assert s0.state == EpochState.OPEN
    report = s0.latest_report()
    assert report.accepted == 3 and report.single == 3
    assert {(r.row, bytes.fromhex(r.message)) for r in report.records} == {(2, b"msg0"), (5, b"msg1"), (9, b"msg2")}
    assert (s0.revealed[0].table == s1.revealed[0].table).all()


def test_replayed_request_rejected(two_server_mesh, two_server_config):
    request = _request(two_server_config)
    two_server_mesh.submit("client:a", request)
    two_server_mesh.submit("client:b", request)
    two_server_mesh.run()
    assert _reasons(two_server_mesh, "client:b") == [RejectReason.REPLAY, RejectReason.REPLAY]
    assert two_server_mesh.servers[0].accepted_count == 1


def test_wrong_epoch_rejected(two_server_mesh, two_server_config):
    two_server_mesh.submit("client:a", _request(two_server_config, epoch_id=7))
    two_server_mesh.run()
    assert _reasons(two_server_mesh, "client:a") == [RejectReason.EPOCH, RejectReason.EPOCH]


def test_write_after_reveal_needs_new_epoch(two_server_mesh, two_server_config):
    """A request built for a revealed epoch is refused in the next one."""
    _close(two_server_mesh)
    two_server_mesh.submit("client:a", _request(two_server_config, epoch_id=1))
    two_server_mesh.submit("client:b", _request(two_server_config, epoch_id=2, seed=2))
    two_server_mesh.run()
    assert _reasons(two_server_mesh, "client:a") == [RejectReason.EPOCH, RejectReason.EPOCH]
    assert all(a.accepted for a in two_server_mesh.inbox["client:b"])


def test_garbage_share_rejected(two_server_mesh, two_server_config):
    """A share that does not parse is refused at intake; its peer times out."""
    request, _ = make_malicious_request(
        MutationStrategy.RANDOM_BYTES, ClientConfig(epoch=two_server_config), 1, random.Random(3)
    )
    two_server_mesh.submit("client:a", request)
    two_server_mesh.run()
    two_server_mesh.tick(61.0)
    assert set(_reasons(two_server_mesh, "client:a")) <= {RejectReason.PARSE, RejectReason.TIMEOUT}
    assert RejectReason.PARSE in _reasons(two_server_mesh, "client:a")
    assert all(s.accepted_count == 0 for s in two_server_mesh.servers)


@pytest.mark.parametrize(
    "strategy", [MutationStrategy.INDEX_TAMPER, MutationStrategy.V_CORRUPT, MutationStrategy.ZERO_MESSAGE]
)
def test_malformed_two_server_write_rejected(two_server_mesh, two_server_config, strategy):
    request, _ = make_malicious_request(strategy, ClientConfig(epoch=two_server_config), 1, random.Random(4))
    two_server_mesh.submit("client:a", request)
    two_server_mesh.run()
    assert _reasons(two_server_mesh, "client:a") == [RejectReason.AUDIT, RejectReason.AUDIT]
    assert all(s.accepted_count == 0 for s in two_server_mesh.servers)


def test_missing_share_times_out(two_server_mesh, two_server_config):
    two_server_mesh.submit("client:a", _request(two_server_config), only={0})
    two_server_mesh.run()
    assert two_server_mesh.inbox["client:a"] == []
    two_server_mesh.tick(61.0)
    assert _reasons(two_server_mesh, "client:a") == [RejectReason.TIMEOUT]
    assert not two_server_mesh.servers[0].pending


def test_peer_frames_before_client_share_are_buffered(two_server_mesh, two_server_config):
    """Server 1 may see the peer's coin-flip commit before its own share."""
    request = _request(two_server_config)
    two_server_mesh.submit("client:a", request, only={1})
    two_server_mesh.run()
    two_server_mesh.submit("client:a", request, only={0})
    two_server_mesh.run()
    assert [a.accepted for a in two_server_mesh.inbox["client:a"]] == [True, True]


def test_threshold_policy_closes_epoch():
    config = epoch_config(threshold=2)
    mesh = build_mesh(config)
    for i in range(2):
        mesh.submit(f"client:{i}", _request(config, row=1 + i, seed=i))
    mesh.run()
    leader = mesh.nodes[server_id(0)]
    assert leader.epoch_id == 2
    assert leader.latest_report().accepted == 2


def test_close_disagreement_retries_then_halts(two_server_config):
    """A peer whose accepted set differs makes the leader retry with backoff, then halt."""
    mesh = build_mesh(two_server_config, close_retries=1, close_backoff_s=1.0)
    mesh.submit("client:a", _request(two_server_config))
    mesh.run()
    mesh.nodes[server_id(1)].accepted.add(bytes(16))

    leader = _close(mesh)
    assert leader.state == EpochState.CLOSING
    assert leader.close_attempts == 1
    mesh.tick(0.5)
    assert leader.close_attempts == 1
    mesh.tick(1.0)
    assert leader.state == EpochState.HALTED
    assert mesh.nodes[server_id(1)].state == EpochState.HALTED
    assert not leader.revealed


def test_close_from_non_leader_is_flagged(two_server_config, tmp_path):
    log = tmp_path / "audit.jsonl"
    server = DatabaseServer(NodeOptions(index=1, config=two_server_config, audit_log_path=str(log)))
    frame = Close(1, 0, bytes(32)).to_frame()
    assert server.handle(server_id(1), frame, 0.0) == []
    assert server.state == EpochState.OPEN
    events = [json.loads(line) for line in log.read_text().splitlines()]
    assert events[-1]["event_type"] == "peer_flagged"


def test_reveal_persists_snapshot_and_board(two_server_config, tmp_path):
    mesh = build_mesh(two_server_config, data_dir=str(tmp_path))
    mesh.submit("client:a", _request(two_server_config, b"kept", 4))
    mesh.run()
    _close(mesh)
    base = tmp_path / "server-0"
    share, nonces = load_snapshot((base / "epoch-1.snapshot").read_bytes())
    assert share.applied_count == 1 and len(nonces) == 1 and share.closed
    board = [json.loads(line) for line in (base / "epoch-1.ndjson").read_text().splitlines()]
    assert board == [{"row": 4, "status": "single", "message": b"kept".hex()}]


def test_multi_server_write_accepted_and_revealed(multi_server_mesh, multi_server_config):
    multi_server_mesh.submit("client:a", _request(multi_server_config, b"zk", 6))
    multi_server_mesh.run()
    assert [a.accepted for a in multi_server_mesh.inbox["client:a"]] == [True, True, True]
    _close(multi_server_mesh)
    for server in multi_server_mesh.servers:
        assert server.epoch_id == 2
        assert [r.message for r in server.latest_report().records] == [b"zk".hex()]


def test_multi_server_invalid_proof_rejected_everywhere(multi_server_mesh, multi_server_config):
    request, _ = make_malicious_request(
        MutationStrategy.INDEX_TAMPER, ClientConfig(epoch=multi_server_config), 1, random.Random(5)
    )
    multi_server_mesh.submit("client:a", request)
    multi_server_mesh.run()
    assert _reasons(multi_server_mesh, "client:a") == [RejectReason.PROOF] * 3
    assert all(s.accepted_count == 0 for s in multi_server_mesh.servers)


def test_multi_server_missing_share_times_out(multi_server_mesh, multi_server_config):
    multi_server_mesh.submit("client:a", _request(multi_server_config), only={0, 1})
    multi_server_mesh.run()
    multi_server_mesh.tick(61.0)
    assert _reasons(multi_server_mesh, "client:a") == [RejectReason.TIMEOUT] * 2


def test_variant_mismatch_is_a_parse_error(multi_server_mesh, two_server_config):
    """An audited write sent to a proof cluster is refused outright."""
    request = _request(two_server_config)
    multi_server_mesh.submit("client:a", request)
    multi_server_mesh.run()
    assert _reasons(multi_server_mesh, "client:a") == [RejectReason.PARSE] * 2


def test_status_counters(two_server_mesh, two_server_config):
    two_server_mesh.submit("client:a", _request(two_server_config))
    two_server_mesh.submit("client:b", _request(two_server_config, epoch_id=3))
    two_server_mesh.run()
    status = two_server_mesh.servers[0].status()
    assert status["accepted"] == 1
    assert status["rejected"] == {"epoch": 1}
    assert status["state"] == "open"
    assert status["expansions"] > 0
    assert two_server_mesh.servers[0].config.variant == Variant.TWO_SERVER
