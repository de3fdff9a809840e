import psutil
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional
from fastapi import APIRouter, Depends
from pydantic import BaseModel
from app.adapters.mesh import NodeRuntime
from app.deps import get_current_peer, get_runtime
from app.core.types import TokenPayload


router = APIRouter(prefix="/api", tags=["metrics"])


class MetricsSnapshot(BaseModel):
    timestamp: str
    cpu_percent: float
    memory_percent: float
    memory_available_mb: float
    load_average: Optional[List[float]] = None
    node: Dict[str, Any]


@router.get("/metrics", response_model=MetricsSnapshot)
async def get_metrics(
    runtime: NodeRuntime = Depends(get_runtime),
    peer: TokenPayload = Depends(get_current_peer),
):
    """Host load plus the node's protocol counters."""
    mem = psutil.virtual_memory()
    load_avg = psutil.getloadavg() if hasattr(psutil, "getloadavg") else None

    return MetricsSnapshot(
        timestamp=datetime.now(timezone.utc).isoformat(),
        cpu_percent=psutil.cpu_percent(interval=None),
        memory_percent=mem.percent,
        memory_available_mb=mem.available / (1024 * 1024),
        load_average=list(load_avg) if load_avg else None,
        node=runtime.status(),
    )
