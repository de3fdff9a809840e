from typing import Optional

from fastapi import APIRouter, Depends, HTTPException, status
from pydantic import BaseModel

from app.adapters.mesh import NodeRuntime
from app.core.types import EpochReport, EpochState
from app.deps import get_runtime
from app.services.server import DatabaseServer


router = APIRouter(prefix="/api", tags=["epoch"])


class EpochStatus(BaseModel):
    epoch_id: int
    state: EpochState
    accepted: int
    pending: int
    last_revealed: Optional[int] = None


def _server(runtime: NodeRuntime) -> DatabaseServer:
    if not isinstance(runtime.node, DatabaseServer):
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Not a database server")
    return runtime.node


@router.get("/epoch", response_model=EpochStatus)
async def get_epoch(runtime: NodeRuntime = Depends(get_runtime)):
    """Current epoch, for clients building requests."""
    server = _server(runtime)
    report = server.latest_report()
    return EpochStatus(
        epoch_id=server.epoch_id,
        state=server.state,
        accepted=server.accepted_count,
        pending=len(server.pending),
        last_revealed=report.epoch_id if report else None,
    )


@router.get("/board", response_model=EpochReport)
async def get_board(runtime: NodeRuntime = Depends(get_runtime)):
    """The most recently revealed epoch."""
    report = _server(runtime).latest_report()
    if report is None:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="No epoch revealed yet")
    return report
