"""
HTTP transport between nodes, and the asyncio runtime that drives one node.

Peer frames go out through one ordered queue per destination so that frames
for the same request (coin-flip commit before reveal) arrive in send order.
"""

import asyncio
import random
import ssl
import uuid
from typing import Optional, Union

import httpx
from loguru import logger

from app.config import Settings
from app.core.clock import WallClock
from app.core.frames import Frame
from app.core.registry import PeerRegistry, client_id, is_client
from app.core.types import Role
from app.security import create_mesh_token
from app.services.auditor import Auditor
from app.services.server import DatabaseServer

SENDER_HEADER = "x-riposte-node"
FRAME_CONTENT_TYPE = "application/octet-stream"
SEND_ATTEMPTS = 3

Node = Union[DatabaseServer, Auditor]


def client_ssl_context(cfg: Settings) -> Union[ssl.SSLContext, bool]:
    """TLS 1.3 context pinned to the mesh CA, presenting this node's certificate."""
    if not cfg.tls_ca:
        return True
    ctx = ssl.create_default_context(cafile=cfg.tls_ca)
    ctx.minimum_version = ssl.TLSVersion.TLSv1_3
    if cfg.tls_cert and cfg.tls_key:
        ctx.load_cert_chain(cfg.tls_cert, cfg.tls_key)
    return ctx


def server_ssl_kwargs(cfg: Settings) -> dict:
    """uvicorn keyword arguments for a server that requires client certificates."""
    if not cfg.tls_enabled:
        return {}
    kwargs = {"ssl_certfile": cfg.tls_cert, "ssl_keyfile": cfg.tls_key}
    if cfg.tls_ca:
        kwargs["ssl_ca_certs"] = cfg.tls_ca
        kwargs["ssl_cert_reqs"] = ssl.CERT_REQUIRED
    return kwargs


def make_http_client(cfg: Settings, timeout: float = 30.0) -> httpx.AsyncClient:
    return httpx.AsyncClient(timeout=timeout, verify=client_ssl_context(cfg))


class MeshTransport:
    """Posts peer frames to `/api/mesh` with a bearer token naming this node."""

    def __init__(
        self,
        node_id: str,
        registry: PeerRegistry,
        token: str,
        client: httpx.AsyncClient,
        owns_client: bool = False,
    ):
        self.node_id = node_id
        self.registry = registry
        self.token = token
        self.client = client
        self.owns_client = owns_client
        self._queues: dict[str, asyncio.Queue] = {}
        self._workers: dict[str, asyncio.Task] = {}

    def send(self, dest: str, frame: Frame):
        queue = self._queues.get(dest)
        if queue is None:
            queue = self._queues[dest] = asyncio.Queue()
            self._workers[dest] = asyncio.create_task(self._worker(dest, queue))
        queue.put_nowait(frame)

    async def _post(self, url: str, frame: Frame):
        response = await self.client.post(
            f"{url}/api/mesh",
            content=frame.encode(),
            headers={
                "authorization": f"Bearer {self.token}",
                "content-type": FRAME_CONTENT_TYPE,
                SENDER_HEADER: self.node_id,
            },
        )
        response.raise_for_status()

    async def _worker(self, dest: str, queue: asyncio.Queue):
        while True:
            frame = await queue.get()
            try:
                url = self.registry.url(dest)
                if url is None:
                    logger.error(f"{self.node_id}: no endpoint for {dest}, dropping {frame.msg_type.name}")
                    continue
                for attempt in range(1, SEND_ATTEMPTS + 1):
                    try:
                        await self._post(url, frame)
                        break
                    except httpx.ConnectError as e:
                        logger.error(f"Cannot connect to {dest} at {url} (attempt {attempt}): {e}")
                        await asyncio.sleep(0.1 * 2 ** (attempt - 1))
                    except httpx.HTTPStatusError as e:
                        logger.error(f"{dest} refused {frame.msg_type.name}: {e.response.status_code}")
                        break
                    except httpx.HTTPError as e:
                        logger.error(f"Mesh error sending to {dest}: {e}")
                        break
            finally:
                queue.task_done()

    async def drain(self):
        """Wait until every queued frame has been posted or dropped."""
        await asyncio.gather(*(q.join() for q in self._queues.values()))

    async def close(self):
        for task in self._workers.values():
            task.cancel()
        await asyncio.gather(*self._workers.values(), return_exceptions=True)
        self._workers.clear()
        self._queues.clear()
        if self.owns_client:
            await self.client.aclose()


class NodeRuntime:
    """Serializes a node's state machine behind a lock and routes what it emits."""

    def __init__(
        self,
        node: Node,
        node_id: str,
        transport: MeshTransport,
        clock: Optional[WallClock] = None,
        tick_interval_s: float = 0.5,
    ):
        self.node = node
        self.node_id = node_id
        self.transport = transport
        self.clock = clock or WallClock()
        self.tick_interval_s = tick_interval_s
        self._lock = asyncio.Lock()
        self._waiters: dict[str, asyncio.Future] = {}
        self._ticker: Optional[asyncio.Task] = None

    def _route(self, outgoing: list[tuple[str, Frame]]):
        for dest, frame in outgoing:
            if is_client(dest):
                waiter = self._waiters.get(dest)
                if waiter is not None and not waiter.done():
                    waiter.set_result(frame)
                else:
                    logger.debug(f"{self.node_id}: no waiter for {dest}")
            else:
                self.transport.send(dest, frame)

    async def deliver(self, sender: str, frame: Frame):
        async with self._lock:
            outgoing = self.node.handle(sender, frame, self.clock.now())
        self._route(outgoing)

    async def tick(self):
        async with self._lock:
            outgoing = self.node.tick(self.clock.now())
        self._route(outgoing)

    async def submit_write(self, frame: Frame, timeout_s: float) -> Frame:
        """Hand a client frame to the node and wait for its WRITE_ACK."""
        name = client_id(uuid.uuid4().hex)
        waiter = asyncio.get_running_loop().create_future()
        self._waiters[name] = waiter
        try:
            await self.deliver(name, frame)
            return await asyncio.wait_for(waiter, timeout_s)
        finally:
            self._waiters.pop(name, None)

    async def close_epoch(self):
        if not isinstance(self.node, DatabaseServer):
            return
        async with self._lock:
            outgoing = self.node.close_epoch(self.clock.now())
        self._route(outgoing)

    async def _run_ticker(self):
        while True:
            await asyncio.sleep(self.tick_interval_s)
            try:
                await self.tick()
            except Exception as e:
                logger.error(f"{self.node_id}: tick failed: {e}")

    def start(self):
        if self._ticker is None:
            self._ticker = asyncio.create_task(self._run_ticker())

    async def stop(self):
        if self._ticker is not None:
            self._ticker.cancel()
            await asyncio.gather(self._ticker, return_exceptions=True)
            self._ticker = None
        await self.transport.close()

    def status(self) -> dict:
        return self.node.status()


def build_runtime(cfg: Settings, client: Optional[httpx.AsyncClient] = None) -> NodeRuntime:
    """Node, transport and runtime for the configured role."""
    clock = WallClock()
    registry = PeerRegistry.from_urls(cfg.servers_list, cfg.auditor or None)
    token = create_mesh_token(cfg.node_id, cfg.role, cfg)
    transport = MeshTransport(
        cfg.node_id, registry, token, client or make_http_client(cfg), owns_client=client is None
    )
    if cfg.role == Role.AUDITOR:
        node: Node = Auditor(timeout_s=cfg.audit_timeout_s, audit_log_path=cfg.audit_log_path or None)
    else:
        node = DatabaseServer(cfg.node_options(), rng=random.SystemRandom(), now=clock.now())
    return NodeRuntime(node, cfg.node_id, transport, clock)
