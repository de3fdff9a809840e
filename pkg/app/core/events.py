from enum import Enum
from typing import Any, Dict

from pydantic import BaseModel


class EventType(str, Enum):
    WRITE_ACCEPTED = "write_accepted"
    WRITE_REJECTED = "write_rejected"
    PEER_FLAGGED = "peer_flagged"
    EPOCH_CLOSING = "epoch_closing"
    EPOCH_REVEALED = "epoch_revealed"
    EPOCH_HALTED = "epoch_halted"
    AUDIT_TIMEOUT = "audit_timeout"


class Event(BaseModel):
    event_type: EventType
    node: str
    data: Dict[str, Any]
    timestamp: str
