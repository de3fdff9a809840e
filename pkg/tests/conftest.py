import random
from collections import defaultdict, deque

import pytest

from app.core.frames import decode_frame
from app.core.registry import AUDITOR_ID, is_client, server_id
from app.core.types import EpochConfig, EpochPolicy, Variant
from app.services.auditor import Auditor
from app.services.client import ClientConfig
from app.services.payloads import plan_geometry
from app.services.server import DatabaseServer, NodeOptions


class Mesh:
    """FIFO in-memory router; frames are re-decoded on every hop."""

    def __init__(self, nodes: dict):
        self.nodes = nodes
        self.queue = deque()
        self.inbox = defaultdict(list)
        self.dropped = set()
        self.now = 0.0

    def dispatch(self, sender, outgoing):
        for dest, frame in outgoing:
            self.queue.append((sender, dest, frame.encode()))

    def submit(self, client, request, only=None):
        for i, frame in enumerate(request.frames):
            if only is None or i in only:
                self.queue.append((client, server_id(i), frame.encode()))

    def run(self):
        while self.queue:
            sender, dest, data = self.queue.popleft()
            frame = decode_frame(data)
            if is_client(dest):
                self.inbox[dest].append(frame.body())
                continue
            if dest in self.dropped or dest not in self.nodes:
                continue
            self.dispatch(dest, self.nodes[dest].handle(sender, frame, self.now))

    def tick(self, now):
        self.now = now
        for name, node in self.nodes.items():
            self.dispatch(name, node.tick(now))
        self.run()

    @property
    def servers(self):
        return [n for n in self.nodes.values() if isinstance(n, DatabaseServer)]


def epoch_config(variant=Variant.TWO_SERVER, n_servers=2, rows=16, row_bytes=16, threshold=None, recovery=False):
    geometry = plan_geometry(rows, row_bytes, variant, recovery, "schnorr64")
    return EpochConfig(
        policy=EpochPolicy(threshold=threshold),
        geometry=geometry,
        variant=variant,
        recovery=recovery,
        n_servers=n_servers,
        group="schnorr64",
    )


def build_mesh(config: EpochConfig, seed=0, **options) -> Mesh:
    nodes = {
        server_id(i): DatabaseServer(
            NodeOptions(index=i, config=config, **options), rng=random.Random(f"{seed}:{i}")
        )
        for i in range(config.n_servers)
    }
    if config.variant == Variant.TWO_SERVER:
        nodes[AUDITOR_ID] = Auditor(timeout_s=options.get("audit_timeout_s", 30.0))
    return Mesh(nodes)


@pytest.fixture
def two_server_config():
    return epoch_config()


@pytest.fixture
def multi_server_config():
    return epoch_config(Variant.MULTI_SERVER, n_servers=3)


@pytest.fixture
def two_server_mesh(two_server_config):
    return build_mesh(two_server_config)


@pytest.fixture
def multi_server_mesh(multi_server_config):
    return build_mesh(multi_server_config)


@pytest.fixture
def client_config(two_server_config):
    return ClientConfig(epoch=two_server_config)
