import time

from fastapi import APIRouter, Request
from pydantic import BaseModel

from app.core.utils import format_uptime


router = APIRouter(prefix="/api", tags=["health"])


class HealthResponse(BaseModel):
    status: str
    message: str
    node: str
    uptime: str


@router.get("/health", response_model=HealthResponse)
async def health_check(request: Request):
    """Health check endpoint."""
    settings = request.app.state.settings
    started = getattr(request.app.state, "started_at", time.monotonic())
    return HealthResponse(
        status="ok",
        message="Riposte node is running",
        node=settings.node_id,
        uptime=format_uptime(time.monotonic() - started),
    )
