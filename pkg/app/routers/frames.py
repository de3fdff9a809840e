import asyncio

from fastapi import APIRouter, Depends, HTTPException, Request, Response, status
from loguru import logger

from app.adapters.mesh import FRAME_CONTENT_TYPE, SENDER_HEADER, NodeRuntime
from app.config import Settings
from app.core.errors import FrameError
from app.core.frames import MsgType, decode_frame
from app.core.types import Role, TokenPayload
from app.deps import get_current_peer, get_runtime, get_settings
from app.security import require_sender


router = APIRouter(prefix="/api", tags=["frames"])

CLIENT_FRAMES = (MsgType.WRITE_SHARE, MsgType.ZK_BUNDLE)


def _decode(data: bytes):
    try:
        return decode_frame(data)
    except FrameError as e:
        logger.warning(f"Protocol error: {e}")
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"Protocol error: {e}",
        )


@router.post("/write")
async def submit_write(
    request: Request,
    runtime: NodeRuntime = Depends(get_runtime),
    settings: Settings = Depends(get_settings),
):
    """Accept one client share; responds with the WRITE_ACK frame once validated."""
    if settings.role != Role.SERVER:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Not a database server")
    frame = _decode(await request.body())
    if frame.msg_type not in CLIENT_FRAMES:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"Protocol error: {frame.msg_type.name} is not a client frame",
        )
    try:
        ack = await runtime.submit_write(frame, timeout_s=settings.audit_timeout_s * 2 + 5)
    except asyncio.TimeoutError:
        raise HTTPException(status_code=status.HTTP_504_GATEWAY_TIMEOUT, detail="Write not acknowledged")
    return Response(content=ack.encode(), media_type=FRAME_CONTENT_TYPE)


@router.post("/mesh", status_code=status.HTTP_202_ACCEPTED)
async def mesh_frame(
    request: Request,
    runtime: NodeRuntime = Depends(get_runtime),
    peer: TokenPayload = Depends(get_current_peer),
):
    """Peer-to-peer frame from another server or the auditor."""
    sender = request.headers.get(SENDER_HEADER, "")
    require_sender(peer, sender)
    frame = _decode(await request.body())
    if frame.msg_type in CLIENT_FRAMES:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail="Protocol error: client frames go to /api/write",
        )
    await runtime.deliver(sender, frame)
    return Response(status_code=status.HTTP_202_ACCEPTED)
