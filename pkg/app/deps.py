from fastapi import Depends, HTTPException, Request, status
from fastapi.security import HTTPBearer, HTTPAuthorizationCredentials
from app.config import Settings
from app.security import decode_token
from app.core.types import TokenPayload


security = HTTPBearer()


def get_settings(request: Request) -> Settings:
    return request.app.state.settings


def get_runtime(request: Request):
    runtime = getattr(request.app.state, "runtime", None)
    if runtime is None:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="Node runtime not started",
        )
    return runtime


async def get_current_peer(
    credentials: HTTPAuthorizationCredentials = Depends(security),
    settings: Settings = Depends(get_settings),
) -> TokenPayload:
    """Authenticate a mesh peer from its bearer token."""
    return decode_token(credentials.credentials, settings)
