from typing import Dict, Optional

from loguru import logger

AUDITOR_ID = "auditor"


def server_id(index: int) -> str:
    return f"server-{index}"


def client_id(name: str) -> str:
    return f"client:{name}"


def is_client(node: str) -> bool:
    return node.startswith("client:")


class PeerRegistry:
    """Node id to base URL directory for the server mesh."""

    def __init__(self):
        self._peers: Dict[str, str] = {}

    def register(self, node: str, url: str):
        self._peers[node] = url.rstrip("/")
        logger.debug(f"Registered peer: {node} -> {url}")

    def url(self, node: str) -> Optional[str]:
        return self._peers.get(node)

    def list_peers(self) -> list[str]:
        return list(self._peers.keys())

    @classmethod
    def from_urls(cls, servers: list[str], auditor: Optional[str]) -> "PeerRegistry":
        registry = cls()
        for i, url in enumerate(servers):
            registry.register(server_id(i), url)
        if auditor:
            registry.register(AUDITOR_ID, auditor)
        return registry
