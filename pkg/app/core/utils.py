import os
from datetime import datetime, timezone
from typing import Any, Dict, Optional

from loguru import logger

from app.core.events import Event, EventType


def write_audit_log(event_type: EventType, node: str, data: Dict[str, Any], log_path: Optional[str]):
    """Append one protocol event as a JSON line. Never pass message content or rows."""
    if not log_path:
        return
    try:
        directory = os.path.dirname(log_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        entry = Event(
            event_type=event_type,
            node=node,
            data=data,
            timestamp=datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
        )

        with open(log_path, "a") as f:
            f.write(entry.model_dump_json() + "\n")
    except Exception as e:
        logger.error(f"Failed to write audit log: {e}")


def format_uptime(seconds: float) -> str:
    """Format uptime in human-readable format."""
    days = int(seconds // 86400)
    hours = int((seconds % 86400) // 3600)
    minutes = int((seconds % 3600) // 60)

    parts = []
    if days > 0:
        parts.append(f"{days}d")
    if hours > 0:
        parts.append(f"{hours}h")
    if minutes > 0:
        parts.append(f"{minutes}m")

    return " ".join(parts) if parts else "< 1m"


def percentile(values: list[float], q: float) -> float:
    """Nearest-rank percentile, q in [0, 100]; 0.0 for an empty list."""
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(1, -(-len(ordered) * q // 100))
    return ordered[int(rank) - 1]
