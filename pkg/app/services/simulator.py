"""
In-process cluster simulator.

Servers, the auditor and clients exchange encoded frames through an event heap
ordered by (virtual time, sequence). Every frame is decoded again on delivery so
the wire codec is on the path. Results depend only on the SimSpec seed.
"""

import heapq
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from loguru import logger

from app.core.clock import VirtualClock
from app.core.frames import MsgType, WriteAck, WriteShare, ZkBundle, decode_frame
from app.core.registry import AUDITOR_ID, client_id, is_client, server_id
from app.core.types import (
    EpochConfig,
    EpochPolicy,
    EpochReport,
    EpochState,
    MutationStrategy,
    SimSpec,
    SimulationResult,
    Variant,
)
from app.dpf.keys import serialize_key
from app.dpf.multi_server import DpfSKey, dpfs_gen
from app.dpf.two_server import Dpf2Key, PointFunction, dpf2_gen
from app.services.audit import share_hash
from app.services.auditor import Auditor
from app.services.client import ClientConfig, WriteRequest, choose_row, make_cover_request, make_write_request
from app.services.payloads import pad_message, plan_geometry
from app.services.server import DatabaseServer, NodeOptions, zk_nonce
from app.zk.proof import encode_opening, encode_public, prove_write_valid

Node = Union[DatabaseServer, Auditor]

STRATEGIES = [s for s in MutationStrategy if s != MutationStrategy.RANDOM]


def epoch_config_for(spec: SimSpec) -> EpochConfig:
    geometry = plan_geometry(spec.rows, spec.row_bytes, spec.variant, spec.recovery, spec.group)
    return EpochConfig(
        policy=EpochPolicy(threshold=spec.threshold),
        geometry=geometry,
        variant=spec.variant,
        recovery=spec.recovery,
        n_servers=spec.n_servers,
        group=spec.group,
    )


@dataclass
class ClientPlan:
    name: str
    kind: str
    row: int
    message: bytes
    request: WriteRequest
    strategy: Optional[MutationStrategy] = None
    acks: list[WriteAck] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return bool(self.acks) and len(self.acks) == len(self.request.frames) and all(a.accepted for a in self.acks)

    @property
    def rejected(self) -> bool:
        return any(not a.accepted for a in self.acks)


def _two_server_frames(epoch_id: int, share_a: bytes, share_b: bytes):
    hash_a, hash_b = share_hash(share_a), share_hash(share_b)
    return (WriteShare(epoch_id, hash_b, share_a).to_frame(), WriteShare(epoch_id, hash_a, share_b).to_frame())


def _flip_bit(data: bytes, rng) -> bytes:
    out = bytearray(data)
    pos = rng.randrange(len(out) * 8)
    out[pos // 8] ^= 1 << (pos % 8)
    return bytes(out)


def make_malicious_request(
    strategy: MutationStrategy, cfg: ClientConfig, epoch_id: int, rng
) -> tuple[WriteRequest, MutationStrategy]:
    """A request deviating from the protocol in one of the supported ways."""
    if strategy == MutationStrategy.RANDOM:
        strategy = rng.choice(STRATEGIES)
    geometry = cfg.geometry
    layout = cfg.layout
    field_ = layout.field
    row = choose_row(rng, geometry.rows)
    payload = layout.embed(pad_message(b"x" * min(4, layout.capacity), layout.message_bytes))
    ix, iy = geometry.split(row)

    if cfg.epoch.variant == Variant.TWO_SERVER:
        if strategy == MutationStrategy.ZERO_MESSAGE:
            key_a, key_b = dpf2_gen(PointFunction(row, field_.zeros(1)[0]), geometry, field_, rng)
        else:
            key_a, key_b = dpf2_gen(PointFunction(row, payload), geometry, field_, rng)
        if strategy == MutationStrategy.INDEX_TAMPER:
            j = (ix + 1 + rng.randrange(geometry.x - 1)) % geometry.x if geometry.x > 1 else ix
            b = list(key_b.b)
            b[j] ^= 1
            s = list(key_b.s)
            if j == ix:
                s[j] = key_a.s[j]
            key_b = Dpf2Key(tuple(b), tuple(s), key_b.v, party=1)
        elif strategy == MutationStrategy.V_CORRUPT:
            v = key_b.v.copy()
            v[rng.randrange(geometry.y)] = field_.random_rows(1, rng)[0]
            key_b = Dpf2Key(key_b.b, key_b.s, v, party=1)
        share_a, share_b = serialize_key(key_a, field_), serialize_key(key_b, field_)
        if strategy == MutationStrategy.BITFLIP:
            if rng.getrandbits(1):
                share_a = _flip_bit(share_a, rng)
            else:
                share_b = _flip_bit(share_b, rng)
        elif strategy == MutationStrategy.RANDOM_BYTES:
            share_a, share_b = rng.randbytes(len(share_a)), rng.randbytes(len(share_b))
        frames = _two_server_frames(epoch_id, share_a, share_b)
        if strategy == MutationStrategy.DROP_PEER:
            frames = frames[:1]
        return WriteRequest(epoch_id, row, b"", frames), strategy

    n = cfg.epoch.n_servers
    keys = dpfs_gen(PointFunction(row, payload), n, geometry, field_, rng)
    commitments, openings, proof = prove_write_valid(keys, row, payload, geometry, field_, epoch_id, rng)
    public = encode_public(commitments, proof)
    shares = [serialize_key(k, field_) for k in keys]
    opening_bytes = [encode_opening(o) for o in openings]
    victim = rng.randrange(n)
    if strategy == MutationStrategy.ZERO_MESSAGE:
        zero = dpfs_gen(PointFunction(row, field_.zeros(1)[0]), n, geometry, field_, rng)
        shares = [serialize_key(k, field_) for k in zero]
    elif strategy == MutationStrategy.INDEX_TAMPER:
        k = keys[victim]
        j = (ix + 1) % geometry.x
        b = list(k.b)
        b[j] = (b[j] + 1) % field_.group.order
        shares[victim] = serialize_key(DpfSKey(tuple(b), k.s, k.v, victim), field_)
    elif strategy == MutationStrategy.V_CORRUPT:
        k = keys[victim]
        v = k.v.copy()
        v[iy] = field_.random_rows(1, rng)[0]
        shares[victim] = serialize_key(DpfSKey(k.b, k.s, v, victim), field_)
    elif strategy == MutationStrategy.BITFLIP:
        public = _flip_bit(public, rng)
    elif strategy == MutationStrategy.RANDOM_BYTES:
        shares[victim] = rng.randbytes(len(shares[victim]))
    frames = tuple(ZkBundle(epoch_id, s, public, o).to_frame() for s, o in zip(shares, opening_bytes))
    if strategy == MutationStrategy.DROP_PEER:
        frames = frames[:-1]
    return WriteRequest(epoch_id, row, zk_nonce(epoch_id, public), frames), strategy


def _client_rng(seed: int, epoch_id: int, name: str) -> random.Random:
    return random.Random(f"{seed}:{epoch_id}:{name}")


def _message(epoch_id: int, index: int, capacity: int) -> bytes:
    return f"m{epoch_id}:{index}".encode()[:capacity]


class Simulation:
    def __init__(self, spec: SimSpec):
        self.spec = spec
        self.config = epoch_config_for(spec)
        self.client_config = ClientConfig(epoch=self.config)
        self.clock = VirtualClock()
        self.latency_s = spec.latency_ms / 1000.0
        self.servers = [
            DatabaseServer(
                NodeOptions(index=i, config=self.config, audit_timeout_s=spec.audit_timeout_s),
                rng=random.Random(f"{spec.seed}:server:{i}"),
            )
            for i in range(spec.n_servers)
        ]
        self.nodes: dict[str, Node] = {server_id(i): s for i, s in enumerate(self.servers)}
        if spec.variant == Variant.TWO_SERVER:
            self.auditor = Auditor(timeout_s=spec.audit_timeout_s)
            self.nodes[AUDITOR_ID] = self.auditor
        self.clients: dict[str, ClientPlan] = {}
        self.plans_by_epoch: dict[int, list[ClientPlan]] = {}
        self.reports: list[EpochReport] = []
        self.tables: dict[int, np.ndarray] = {}
        self._events: list = []
        self._seq = 0

    # -- event plumbing ----------------------------------------------------

    def _schedule(self, at: float, sender: str, dest: str, data: bytes):
        heapq.heappush(self._events, (at, self._seq, sender, dest, data))
        self._seq += 1

    def _dispatch(self, sender: str, outgoing, now: float):
        for dest, frame in outgoing:
            self._schedule(now + self.latency_s, sender, dest, frame.encode())

    def _deliver(self, sender: str, dest: str, data: bytes, now: float):
        frame = decode_frame(data)
        if is_client(dest):
            plan = self.clients.get(dest)
            if plan is not None and frame.msg_type == MsgType.WRITE_ACK:
                plan.acks.append(frame.body())
            return
        node = self.nodes.get(dest)
        if node is None:
            logger.warning(f"simulator: no node {dest}")
            return
        self._dispatch(dest, node.handle(sender, frame, now), now)

    def _tick_all(self, now: float) -> bool:
        produced = False
        for name, node in self.nodes.items():
            out = node.tick(now)
            if out:
                produced = True
                self._dispatch(name, out, now)
        return produced

    def _busy(self) -> bool:
        if any(s.pending for s in self.servers):
            return True
        return self.spec.variant == Variant.TWO_SERVER and bool(self.auditor.pending)

    def run_until_quiet(self):
        """Drain the event heap; jump virtual time to fire timeouts while work is stuck."""
        while True:
            while self._events:
                at, _, sender, dest, data = heapq.heappop(self._events)
                self.clock.advance_to(max(at, self.clock.now()))
                self._deliver(sender, dest, data, self.clock.now())
            if self._tick_all(self.clock.now()):
                continue
            if not self._busy():
                return
            self.clock.advance_to(self.clock.now() + self.spec.audit_timeout_s)

    def submit(self, plan: ClientPlan, at: Optional[float] = None):
        at = self.clock.now() if at is None else at
        self.clients[plan.name] = plan
        for i, frame in enumerate(plan.request.frames):
            self._schedule(at + self.latency_s, plan.name, server_id(i), frame.encode())

    # -- clients -----------------------------------------------------------

    def plan_client(self, epoch_id: int, kind: str, index: int) -> ClientPlan:
        name = client_id(f"{kind}{index}")
        rng = _client_rng(self.spec.seed, epoch_id, name)
        cfg = self.client_config
        if kind == "honest":
            row = choose_row(rng, self.config.geometry.rows)
            message = _message(epoch_id, index, cfg.layout.capacity)
            return ClientPlan(name, kind, row, message, make_write_request(message, row, cfg, epoch_id, rng))
        if kind == "cover":
            return ClientPlan(name, kind, 0, b"", make_cover_request(cfg, epoch_id, rng))
        request, strategy = make_malicious_request(self.spec.strategy, cfg, epoch_id, rng)
        return ClientPlan(name, kind, request.row, b"", request, strategy)

    def build_plans(self, epoch_id: int) -> list[ClientPlan]:
        spec = self.spec
        n_bad = int(round(spec.n_clients * spec.malicious_fraction))
        jobs = [("honest", i) for i in range(spec.n_clients - n_bad)]
        jobs += [("malicious", i) for i in range(n_bad)]
        jobs += [("cover", i) for i in range(spec.cover_clients)]
        if spec.stress and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=spec.workers) as pool:
                return list(pool.map(lambda job: self.plan_client(epoch_id, *job), jobs))
        return [self.plan_client(epoch_id, *job) for job in jobs]

    # -- epochs ------------------------------------------------------------

    def run_epoch(self) -> Optional[EpochReport]:
        leader = self.servers[0]
        epoch_id = leader.epoch_id
        plans = self.build_plans(epoch_id)
        self.plans_by_epoch[epoch_id] = plans
        start = self.clock.now()
        interval = self.spec.submit_interval_ms / 1000.0
        for i, plan in enumerate(plans):
            self.submit(plan, start + i * interval)
        self.run_until_quiet()

        if leader.epoch_id == epoch_id and leader.state == EpochState.OPEN:
            self._dispatch(server_id(0), leader.close_epoch(self.clock.now()), self.clock.now())
            self.run_until_quiet()
        revealed = [r for r in leader.revealed if r.epoch_id == epoch_id]
        if not revealed:
            logger.error(f"simulator: epoch {epoch_id} did not reveal (leader {leader.state.value})")
            return None
        self.tables[epoch_id] = revealed[0].table
        self.reports.append(revealed[0].report)
        return revealed[0].report

    def run(self) -> SimulationResult:
        for _ in range(self.spec.epochs):
            if self.run_epoch() is None:
                break
        return self.result()

    def delivered(self, plan: ClientPlan, report: EpochReport) -> bool:
        wanted = plan.message.hex()
        return any(r.row == plan.row and r.message == wanted for r in report.records)

    def result(self) -> SimulationResult:
        result = SimulationResult(seed=self.spec.seed, reports=list(self.reports))
        by_epoch = {r.epoch_id: r for r in self.reports}
        for epoch_id, plans in self.plans_by_epoch.items():
            report = by_epoch.get(epoch_id)
            for plan in plans:
                if plan.rejected:
                    result.rejected += 1
                if plan.kind == "honest":
                    result.honest_writers += 1
                    if report is not None and plan.accepted and self.delivered(plan, report):
                        result.honest_delivered += 1
                elif plan.kind == "malicious":
                    result.malicious_requests += 1
                    result.malicious_accepted += int(plan.accepted)
                else:
                    result.cover_requests += 1
        if result.honest_writers:
            result.success_rate = result.honest_delivered / result.honest_writers
        return result

    def accepted_payloads(self, epoch_id: int) -> list[tuple[int, np.ndarray]]:
        """(row, payload) of every accepted honest or cover write, for oracle checks."""
        layout = self.client_config.layout
        out = []
        for plan in self.plans_by_epoch.get(epoch_id, []):
            if not plan.accepted or plan.kind == "malicious":
                continue
            if plan.kind == "honest":
                out.append((plan.row, layout.embed(pad_message(plan.message, layout.message_bytes))))
            else:
                out.append((0, None))
        return out


def run_simulation(spec: SimSpec) -> SimulationResult:
    logger.info(
        f"Simulating {spec.n_clients} clients ({spec.malicious_fraction:.0%} malicious, "
        f"{spec.cover_clients} cover) over {spec.epochs} epoch(s), seed {spec.seed}"
    )
    return Simulation(spec).run()
